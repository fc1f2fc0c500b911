// SPDX-License-Identifier: Apache-2.0
//
// THz-band channel synthesis: array steering vectors, spreading and
// molecular-absorption pathloss, rough-surface reflection, Rician small-scale
// fading, and the reflecting-surface amplitude model. Everything here is a
// pure function of value inputs plus an explicit Rng handle.
#ifndef ISAC_THZ_CHANNEL_HPP
#define ISAC_THZ_CHANNEL_HPP

#include "isac/common.hpp"

#include <functional>

namespace isac {

struct PropagationParams {
    double f = 0.55e12;        // carrier frequency, Hz
    double l = 10.0;           // transmission distance, m
    double k_abs = 6.7141e-4;  // molecular absorption coefficient, 1/m
    double G_t = 1.0;          // transmit antenna gain, linear
    double G_r = 1.0;          // receive antenna gain, linear
    double d_over_lambda = 0.5;
    double Z = 267.0;          // reflecting material wave impedance, ohm
    double Z0 = kFreeSpaceImpedance;
    double sigma_rough = 5.0e-5;  // surface roughness std, m
    double phi_in = kPi / 4.0;    // incidence angle, rad
    int n_NL = 4;                 // number of NLoS rays
    double rician_K = 10.0;       // Rician factor, linear

    void validate() const {
        if (!(f > 0.0)) throw ConfigError("PropagationParams: f must be positive");
        if (!(l > 0.0)) throw SingularityError("PropagationParams: l must be positive");
        if (k_abs < 0.0) throw ConfigError("PropagationParams: k_abs must be nonnegative");
        if (!(phi_in >= 0.0 && phi_in < kPi / 2.0))
            throw ConfigError("PropagationParams: phi_in must lie in [0, pi/2)");
        if (n_NL < 0) throw ConfigError("PropagationParams: n_NL must be nonnegative");
        if (rician_K < 0.0) throw ConfigError("PropagationParams: rician_K must be nonnegative");
    }
};

// ---------------------------------------------------------------------------
// Steering vectors
// ---------------------------------------------------------------------------

// Uniform linear array response, entries sqrt(1/M) exp(-j 2 pi (d/lambda) m cos theta).
// Unit Euclidean norm for every theta.
inline CVec ula_steering(double theta, int M, double d_over_lambda = 0.5) {
    if (M < 1) throw DimensionError("ula_steering: M must be >= 1");
    CVec a(M);
    const double scale = std::sqrt(1.0 / static_cast<double>(M));
    const double step = -2.0 * kPi * d_over_lambda * std::cos(theta);
    for (int m = 0; m < M; ++m)
        a[m] = std::polar(scale, step * static_cast<double>(m));
    return a;
}

// Uniform planar array response for N elements on a sqrt(N) x sqrt(N) grid,
// flattened row-major. Uses the 1/N scaling, so the vector norm is 1/sqrt(N).
inline CVec upa_steering(double phi, double theta, int N, double d_over_lambda = 0.5) {
    if (N < 1) throw DimensionError("upa_steering: N must be >= 1");
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(N))));
    if (side * side != N)
        throw DimensionError("upa_steering: N must be a perfect square");
    CVec v(N);
    const double scale = 1.0 / static_cast<double>(N);
    const double cc = 2.0 * kPi * d_over_lambda * std::cos(phi) * std::cos(theta);
    const double ss = 2.0 * kPi * d_over_lambda * std::sin(phi) * std::sin(theta);
    for (int p = 0; p < side; ++p)
        for (int q = 0; q < side; ++q)
            v[p * side + q] = std::polar(scale, p * cc + q * ss);
    return v;
}

// ---------------------------------------------------------------------------
// Pathloss and reflection
// ---------------------------------------------------------------------------

struct PathlossLos {
    double L_spread = 0.0;   // (c / 4 pi f l)^2
    double alpha_los = 0.0;  // L_spread * exp(-k_abs l)
};

inline PathlossLos pathloss_los(const PropagationParams& p) {
    if (!(p.l > 0.0)) throw SingularityError("pathloss_los: undefined at zero distance");
    if (!(p.f > 0.0)) throw SingularityError("pathloss_los: undefined at zero frequency");
    PathlossLos out;
    const double ratio = kSpeedOfLight / (4.0 * kPi * p.f * p.l);
    out.L_spread = ratio * ratio;
    out.alpha_los = out.L_spread * std::exp(-p.k_abs * p.l);
    return out;
}

// Fresnel reflection times the Rayleigh roughness factor.
inline Complex reflection_coefficient(const PropagationParams& p) {
    if (!(p.Z > 0.0)) throw ConfigError("reflection_coefficient: Z must be positive");
    const double sin_ref = (p.Z / p.Z0) * std::sin(p.phi_in);
    if (std::abs(sin_ref) > 1.0)
        throw TotalInternalReflectionError(
            "reflection_coefficient: |Z/Z0 sin(phi_in)| > 1, refraction angle undefined");
    const double phi_ref = std::asin(sin_ref);
    const double num = p.Z * std::cos(p.phi_in) - p.Z0 * std::cos(phi_ref);
    const double den = p.Z * std::cos(p.phi_in) + p.Z0 * std::cos(phi_ref);
    const double iota = num / den;
    const double arg = 4.0 * kPi * p.f * p.sigma_rough * std::cos(p.phi_in) / kSpeedOfLight;
    const double xi = std::exp(-0.5 * arg * arg);
    return Complex(iota * xi, 0.0);
}

inline double pathloss_nlos(const PropagationParams& p, Complex gamma) {
    const PathlossLos pl = pathloss_los(p);
    return std::norm(gamma) * pl.alpha_los;
}

// ---------------------------------------------------------------------------
// Rician small-scale channel
// ---------------------------------------------------------------------------

using SteeringFn = std::function<CVec(double)>;

// H = sqrt(K/(1+K)) H_LOS + sqrt(1/(1+K)) H_NLOS with
// H_LOS = alpha_los G_t G_r b_r(theta_aoa) a_t^H(theta_aod) and the NLoS sum
// over n_NL rays at angles drawn uniformly on [-pi/2, pi/2]. Each ray's
// magnitude comes from the NLoS pathloss at an independent incidence angle,
// with phase uniform on [0, 2 pi).
inline CMat rician_channel(const PropagationParams& p, const SteeringFn& tx_steer,
                           const SteeringFn& rx_steer, double theta_aod, double theta_aoa,
                           Rng& rng) {
    p.validate();
    const CVec at = tx_steer(theta_aod);
    const CVec br = rx_steer(theta_aoa);
    const double gains = p.G_t * p.G_r;
    const double alpha_los = pathloss_los(p).alpha_los;

    CMat h_los = alpha_los * gains * (br * at.adjoint());

    CMat h_nlos = CMat::Zero(br.size(), at.size());
    // With Z > Z0 the incidence draw stays below the total-internal-reflection angle.
    const double phi_max = (p.Z <= p.Z0) ? kPi / 2.0 : std::asin(p.Z0 / p.Z);
    for (int i = 0; i < p.n_NL; ++i) {
        const double aod_i = rng.uniform(-kPi / 2.0, kPi / 2.0);
        const double aoa_i = rng.uniform(-kPi / 2.0, kPi / 2.0);
        PropagationParams ray = p;
        ray.phi_in = rng.uniform(0.0, phi_max * 0.999999);
        const double mag = pathloss_nlos(ray, reflection_coefficient(ray));
        const Complex alpha_i = std::polar(mag, rng.uniform(0.0, 2.0 * kPi));
        const CVec at_i = tx_steer(aod_i);
        const CVec br_i = rx_steer(aoa_i);
        if (at_i.size() != at.size() || br_i.size() != br.size())
            throw DimensionError("rician_channel: steering dimension changed across rays");
        h_nlos += alpha_i * gains * (br_i * at_i.adjoint());
    }

    const double k = p.rician_K;
    return std::sqrt(k / (1.0 + k)) * h_los + std::sqrt(1.0 / (1.0 + k)) * h_nlos;
}

// ---------------------------------------------------------------------------
// Reflecting-surface amplitude model
// ---------------------------------------------------------------------------

// gamma(beta) = (1 - gamma_min) ((sin(beta - phi) + 1) / 2)^eps + gamma_min,
// in [gamma_min, 1] by construction.
inline double irs_amplitude(double beta, double gamma_min, double phi_shift, double eps_exp) {
    require(gamma_min >= 0.0 && gamma_min <= 1.0, "irs_amplitude: gamma_min must be in [0, 1]");
    require(eps_exp >= 0.0, "irs_amplitude: eps_exp must be nonnegative");
    const double base = (std::sin(beta - phi_shift) + 1.0) / 2.0;
    return (1.0 - gamma_min) * std::pow(base, eps_exp) + gamma_min;
}

// ---------------------------------------------------------------------------
// Scenario-level channel synthesis
// ---------------------------------------------------------------------------

struct ChannelGeometry {
    std::vector<double> user_angles_bs;   // AoD at the BS toward each user
    std::vector<double> user_angles_irs;  // azimuth at the surface toward each user
    double irs_angle_bs = 0.0;            // AoD at the BS toward the surface
    double irs_azimuth = 0.0;             // azimuth of arrival at the surface
    double irs_elevation = 0.0;
};

struct ChannelSet {
    CMat H1;                // surface <- BS, N x M
    std::vector<CMat> H0;   // per user: BS-side column(s), M x R (R = 1 in MISO)
    std::vector<CMat> H2;   // per user: surface-side column(s), N x R
    ChannelGeometry geometry;

    int users() const { return static_cast<int>(H0.size()); }

    // MISO convenience: columns stacked into an M x K matrix.
    CMat H0_matrix() const {
        require(!H0.empty(), "ChannelSet: empty H0");
        CMat out(H0[0].rows(), static_cast<Eigen::Index>(H0.size()));
        for (std::size_t k = 0; k < H0.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = H0[k].col(0);
        return out;
    }
};

struct ChannelSynthConfig {
    PropagationParams prop;
    double dist_bs_user = 10.0;  // m
    double dist_bs_irs = 8.0;
    double dist_irs_user = 6.0;
    bool normalize = true;   // rescale links to unit average entry power
    bool disable_irs = false;  // forces H2 = 0 (ablation)
};

namespace detail {

inline void normalize_unit_avg_power(std::vector<CMat>& mats) {
    double acc = 0.0;
    std::size_t n = 0;
    for (const auto& m : mats) {
        acc += m.squaredNorm();
        n += static_cast<std::size_t>(m.size());
    }
    if (acc <= 0.0 || n == 0) return;
    const double s = std::sqrt(static_cast<double>(n) / acc);
    for (auto& m : mats) m *= s;
}

}  // namespace detail

// Draws user geometry and synthesizes {H0, H1, H2} for an M-antenna BS,
// K users with R antennas each, and an N-element surface. In normalized mode
// each link family is rescaled to unit average entry power (the direct link
// H0 exactly), so noise power is set through the configured sigma_c2.
inline ChannelSet synthesize_channels(int M, int K, int N, int R, const ChannelSynthConfig& cfg,
                                      Rng& rng) {
    if (M < 1 || K < 1 || N < 1 || R < 1)
        throw DimensionError("synthesize_channels: all dimensions must be >= 1");
    const double dl = cfg.prop.d_over_lambda;

    ChannelSet cs;
    cs.geometry.irs_angle_bs = rng.uniform(-kPi / 3.0, kPi / 3.0);
    cs.geometry.irs_azimuth = rng.uniform(-kPi / 3.0, kPi / 3.0);
    cs.geometry.irs_elevation = 0.0;

    const SteeringFn bs_steer = [M, dl](double th) { return ula_steering(th, M, dl); };
    const SteeringFn user_steer = [R, dl](double th) { return ula_steering(th, R, dl); };
    const double elev = cs.geometry.irs_elevation;
    const SteeringFn irs_steer = [N, dl, elev](double th) { return upa_steering(elev, th, N, dl); };

    PropagationParams p1 = cfg.prop;
    p1.l = cfg.dist_bs_irs;
    cs.H1 = rician_channel(p1, bs_steer, irs_steer, cs.geometry.irs_angle_bs,
                           cs.geometry.irs_azimuth, rng);

    for (int k = 0; k < K; ++k) {
        const double th_bs = rng.uniform(-kPi / 2.0, kPi / 2.0);
        const double th_irs = rng.uniform(-kPi / 2.0, kPi / 2.0);
        cs.geometry.user_angles_bs.push_back(th_bs);
        cs.geometry.user_angles_irs.push_back(th_irs);

        PropagationParams p0 = cfg.prop;
        p0.l = cfg.dist_bs_user;
        // Physical propagation runs BS -> user; the stored block is its adjoint,
        // so the effective channel composes as H0^H + H2^H V H1.
        cs.H0.push_back(rician_channel(p0, bs_steer, user_steer, th_bs, 0.0, rng).adjoint());

        PropagationParams p2 = cfg.prop;
        p2.l = cfg.dist_irs_user;
        cs.H2.push_back(rician_channel(p2, irs_steer, user_steer, th_irs, 0.0, rng).adjoint());
    }

    if (cfg.normalize) {
        detail::normalize_unit_avg_power(cs.H0);
        detail::normalize_unit_avg_power(cs.H2);
        std::vector<CMat> h1{cs.H1};
        detail::normalize_unit_avg_power(h1);
        cs.H1 = h1[0];
    }
    if (cfg.disable_irs)
        for (auto& h2 : cs.H2) h2.setZero();
    return cs;
}

// ---------------------------------------------------------------------------
// Columnar CSV serialization: matrix-id, row, col, re, im
// ---------------------------------------------------------------------------

inline void channelset_to_csv(const ChannelSet& cs, std::ostream& out) {
    auto dump = [&out](const std::string& id, const CMat& m) {
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c)
                out << id << ',' << r << ',' << c << ',' << format_double(m(r, c).real()) << ','
                    << format_double(m(r, c).imag()) << '\n';
    };
    out << "matrix,row,col,re,im\n";
    dump("H1", cs.H1);
    for (std::size_t k = 0; k < cs.H0.size(); ++k) dump("H0_" + std::to_string(k), cs.H0[k]);
    for (std::size_t k = 0; k < cs.H2.size(); ++k) dump("H2_" + std::to_string(k), cs.H2[k]);
}

inline std::string channelset_to_csv_string(const ChannelSet& cs) {
    std::ostringstream ss;
    channelset_to_csv(cs, ss);
    return ss.str();
}

}  // namespace isac

#endif  // ISAC_THZ_CHANNEL_HPP
