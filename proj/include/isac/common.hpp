// SPDX-License-Identifier: Apache-2.0
#ifndef ISAC_COMMON_HPP
#define ISAC_COMMON_HPP

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace isac {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using Complex = std::complex<double>;
using IndexVec = std::vector<int>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSpeedOfLight = 3.0e8;     // m/s
inline constexpr double kFreeSpaceImpedance = 377.0;  // ohm

// ---------------------------------------------------------------------------
// Error types
// ---------------------------------------------------------------------------

struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct SingularityError : std::domain_error {
    using std::domain_error::domain_error;
};

struct TotalInternalReflectionError : std::domain_error {
    using std::domain_error::domain_error;
};

struct InvalidActionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ContractViolation : std::logic_error {
    using std::logic_error::logic_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const char* what) {
    if (!cond) throw ContractViolation(what);
}

// ---------------------------------------------------------------------------
// Deterministic RNG
//
// All randomness in the library flows through explicit Rng handles. The
// distributions are implemented here (rather than via <random> adaptors)
// so that streams are bit-reproducible for a fixed seed and draw order.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) { reseed(seed); }

    void reseed(std::uint64_t seed) {
        seed_ = seed;
        std::uint64_t sm = seed;
        // xoshiro256** state seeded through splitmix64, all-zero state avoided
        for (auto& s : s_) s = splitmix64(sm);
    }

    std::uint64_t seed() const { return seed_; }

    // Derives an independent stream; (kind, index) identify the consumer.
    Rng derive(std::uint64_t kind, std::uint64_t index = 0) const {
        std::uint64_t mix = seed_;
        splitmix64(mix);
        mix ^= 0x6a09e667f3bcc909ULL * (kind + 1);
        mix ^= 0xbb67ae8584caa73bULL * (index + 1);
        return Rng(mix);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform on [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer on {0, ..., n-1}
    int uniform_int(int n) {
        require(n > 0, "uniform_int: n must be positive");
        const std::uint64_t bound = ~std::uint64_t{0} - (~std::uint64_t{0} % static_cast<std::uint64_t>(n));
        std::uint64_t x = next_u64();
        while (x >= bound) x = next_u64();
        return static_cast<int>(x % static_cast<std::uint64_t>(n));
    }

    // Standard normal via Box-Muller (no cached spare, fixed draw order)
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    // Standard normal truncated to [-c, c], rejection sampled
    double truncated_normal(double c) {
        for (;;) {
            const double z = normal();
            if (std::abs(z) <= c) return z;
        }
    }

    Vec truncated_normal_vec(Eigen::Index n, double c) {
        Vec v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = truncated_normal(c);
        return v;
    }

    Vec normal_vec(Eigen::Index n) {
        Vec v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
        return v;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t seed_ = 0;
    std::uint64_t s_[4] = {};
};

// ---------------------------------------------------------------------------
// Small numeric helpers
// ---------------------------------------------------------------------------

inline bool all_finite(const Vec& v) { return v.allFinite(); }
inline bool all_finite(const Mat& m) { return m.allFinite(); }
inline bool all_finite(const CMat& m) {
    return m.real().allFinite() && m.imag().allFinite();
}

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

// ---------------------------------------------------------------------------
// CSV emission. All files use '.' decimal, ',' separator, LF line endings.
// ---------------------------------------------------------------------------

inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

// Bit-exact textual round-trip for checkpoints.
inline std::string format_double_hex(double x) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%a", x);
    return buf;
}

class CsvWriter {
public:
    explicit CsvWriter(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw ConfigError("cannot open file for writing: " + path);
    }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }

    std::ofstream& stream() { return out_; }

private:
    std::ofstream out_;
};

// FNV-1a, used for config hashes in run manifests.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace isac

#endif  // ISAC_COMMON_HPP
