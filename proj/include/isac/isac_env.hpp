// SPDX-License-Identifier: Apache-2.0
//
// The ISAC environment: cascaded effective channel, SINR / sum-rate reward,
// radar beam pattern and its MSE constraint, discrete phase control, power
// projection, and the per-step dynamics used by the training loops.
#ifndef ISAC_ENV_HPP
#define ISAC_ENV_HPP

#include "isac/thz_channel.hpp"

namespace isac {

struct ScenarioConfig {
    int M = 5;   // BS antennas
    int K = 4;   // users
    int N = 16;  // reflecting elements
    int R = 1;   // receive antennas per user (1 = MISO)
    int b = 2;   // phase quantization bits
    double P_max = 10.0;    // total transmit power, linear
    double sigma_c2 = 1.0;  // communication noise power, linear
    double ell = 1.0;       // beam-pattern error threshold
    std::vector<double> target_angles = {deg2rad(-40.0), deg2rad(0.0), deg2rad(40.0)};
    std::vector<double> target_elevations;  // defaults to zeros
    double Delta = deg2rad(10.0);           // ideal beam width
    double grid_res = deg2rad(0.1);         // beam-pattern grid resolution
    double d_over_lambda = 0.5;

    // Surface amplitude model constants
    double gamma_min = 0.2;
    double phi_shift = 0.43 * kPi;
    double eps_exp = 1.6;

    bool normalize_pattern = false;  // normalize P by its max before the MSE
    bool rate_log2 = true;           // false: natural log

    int phase_levels() const { return 1 << b; }

    void validate() const {
        if (M < 1 || K < 1 || N < 1 || R < 1)
            throw ConfigError("ScenarioConfig: M, K, N, R must be >= 1");
        if (b < 1) throw ConfigError("ScenarioConfig: b must be >= 1");
        if (!(P_max > 0.0)) throw ConfigError("ScenarioConfig: P_max must be positive");
        if (!(sigma_c2 > 0.0)) throw ConfigError("ScenarioConfig: sigma_c2 must be positive");
        if (!(ell > 0.0)) throw ConfigError("ScenarioConfig: ell must be positive");
        for (double a : target_angles)
            if (!(a > -kPi / 2.0 && a < kPi / 2.0))
                throw ConfigError("ScenarioConfig: target angles must lie in (-pi/2, pi/2)");
        const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(N))));
        if (side * side != N) throw ConfigError("ScenarioConfig: N must be a perfect square");
    }
};

// ---------------------------------------------------------------------------
// Phase configuration
// ---------------------------------------------------------------------------

struct PhaseConfig {
    IndexVec indices;  // per element, in {0 .. 2^b - 1}
    Vec betas;
    Vec gammas;
    CMat V;  // diagonal N x N

    CVec v_diag() const { return V.diagonal(); }
};

// beta_n = i_n 2 pi / (2^b - 1); amplitudes through the surface model; V diagonal.
inline PhaseConfig phase_matrix(const IndexVec& indices, const ScenarioConfig& cfg) {
    const int levels = cfg.phase_levels();
    const int n = static_cast<int>(indices.size());
    if (n != cfg.N) throw DimensionError("phase_matrix: index count must equal N");
    PhaseConfig pc;
    pc.indices = indices;
    pc.betas.resize(n);
    pc.gammas.resize(n);
    pc.V = CMat::Zero(n, n);
    const double step = 2.0 * kPi / static_cast<double>(levels - 1);
    for (int i = 0; i < n; ++i) {
        if (indices[i] < 0 || indices[i] >= levels)
            throw InvalidActionError("phase_matrix: index out of range");
        pc.betas[i] = static_cast<double>(indices[i]) * step;
        pc.gammas[i] = irs_amplitude(pc.betas[i], cfg.gamma_min, cfg.phi_shift, cfg.eps_exp);
        pc.V(i, i) = std::polar(pc.gammas[i], pc.betas[i]);
    }
    return pc;
}

// ---------------------------------------------------------------------------
// Effective channel
// ---------------------------------------------------------------------------

// Per user k: H_k = H0_k^H + H2_k^H V H1, an R x M block. MISO stacks the
// K row vectors into a K x M matrix.
inline CMat effective_channel_user(const ChannelSet& cs, const PhaseConfig& pc, int k) {
    const auto& h0 = cs.H0.at(static_cast<std::size_t>(k));
    const auto& h2 = cs.H2.at(static_cast<std::size_t>(k));
    if (h2.rows() != pc.V.rows() || cs.H1.rows() != pc.V.cols())
        throw DimensionError("effective_channel: surface dimensions inconsistent");
    if (h0.rows() != cs.H1.cols())
        throw DimensionError("effective_channel: BS dimensions inconsistent");
    return h0.adjoint() + h2.adjoint() * pc.V * cs.H1;
}

inline CMat effective_channel(const ChannelSet& cs, const PhaseConfig& pc) {
    const int K = cs.users();
    require(K >= 1, "effective_channel: no users");
    const Eigen::Index M = cs.H1.cols();
    CMat H(K, M);
    for (int k = 0; k < K; ++k) {
        const CMat row = effective_channel_user(cs, pc, k);
        if (row.rows() != 1) throw DimensionError("effective_channel: use per-user form when R > 1");
        H.row(k) = row.row(0);
    }
    return H;
}

// ---------------------------------------------------------------------------
// SINR and rates
// ---------------------------------------------------------------------------

// H holds one effective row per user; SINR_k = |h_k w_k|^2 / (sum_{l != k} |h_k w_l|^2 + sigma^2).
inline double user_sinr(const CMat& H, const CMat& W, int k, double sigma_c2) {
    if (k < 0 || k >= H.rows()) throw DimensionError("user_sinr: user index out of range");
    if (H.cols() != W.rows()) throw DimensionError("user_sinr: H and W dimensions mismatch");
    const CVec gains = (H.row(k) * W).transpose();
    const double sig = std::norm(gains[k]);
    double interf = 0.0;
    for (Eigen::Index l = 0; l < gains.size(); ++l)
        if (l != k) interf += std::norm(gains[l]);
    return sig / (interf + sigma_c2);
}

struct RateResult {
    Vec per_user;
    double f0 = 0.0;
};

inline double rate_from_sinr(double sinr, bool log2) {
    return log2 ? std::log2(1.0 + sinr) : std::log(1.0 + sinr);
}

inline RateResult sum_rate_reward(const CMat& H, const CMat& W, const ScenarioConfig& cfg) {
    RateResult out;
    out.per_user.resize(H.rows());
    for (Eigen::Index k = 0; k < H.rows(); ++k) {
        out.per_user[k] = rate_from_sinr(user_sinr(H, W, static_cast<int>(k), cfg.sigma_c2),
                                         cfg.rate_log2);
        out.f0 += out.per_user[k];
    }
    return out;
}

// Per-stream rate of a single R-antenna user: each beam column serves one
// stream, interference is the user's other streams.
inline double mimo_user_rate(const CMat& Hk, const CMat& Wk, const ScenarioConfig& cfg) {
    if (Hk.cols() != Wk.rows()) throw DimensionError("mimo_user_rate: dimensions mismatch");
    const CMat G = Hk * Wk;  // R x R
    double rate = 0.0;
    for (Eigen::Index r = 0; r < G.rows(); ++r) {
        const double sig = std::norm(G(r, r));
        double interf = 0.0;
        for (Eigen::Index s = 0; s < G.cols(); ++s)
            if (s != r) interf += std::norm(G(r, s));
        rate += rate_from_sinr(sig / (interf + cfg.sigma_c2), cfg.rate_log2);
    }
    return rate;
}

// ---------------------------------------------------------------------------
// Radar beam pattern
// ---------------------------------------------------------------------------

struct BeamGrid {
    std::vector<double> psi;  // rad, [-pi/2, pi/2] inclusive
    CMat steering;            // L x M, row l = a(psi_l)^T

    static BeamGrid build(const ScenarioConfig& cfg) {
        BeamGrid g;
        const int L = static_cast<int>(std::lround(kPi / cfg.grid_res)) + 1;
        g.psi.resize(L);
        g.steering.resize(L, cfg.M);
        for (int l = 0; l < L; ++l) {
            g.psi[l] = -kPi / 2.0 + static_cast<double>(l) * cfg.grid_res;
            g.steering.row(l) = ula_steering(g.psi[l], cfg.M, cfg.d_over_lambda).transpose();
        }
        return g;
    }
};

inline void check_hermitian(const CMat& R) {
    if (R.rows() != R.cols()) throw ContractViolation("beam_pattern: R must be square");
    const double scale = std::max(1.0, R.norm());
    if ((R - R.adjoint()).norm() > 1e-9 * scale)
        throw ContractViolation("beam_pattern: R must be Hermitian");
}

// P(psi_l) = a(psi_l)^H R a(psi_l) over the grid.
inline Vec beam_pattern(const CMat& R_cov, const BeamGrid& grid) {
    check_hermitian(R_cov);
    if (R_cov.rows() != grid.steering.cols())
        throw DimensionError("beam_pattern: R dimension must match grid steering");
    const CMat t = grid.steering.conjugate() * R_cov;  // row l = a_l^H R
    Vec P(grid.steering.rows());
    for (Eigen::Index l = 0; l < grid.steering.rows(); ++l)
        P[l] = std::real(t.row(l).cwiseProduct(grid.steering.row(l)).sum());
    return P;
}

// 1 iff psi lies within Delta/2 of a target direction, boundaries inclusive.
inline double desired_pattern(double psi, const ScenarioConfig& cfg) {
    for (double tp : cfg.target_angles)
        if (std::abs(psi - tp) <= cfg.Delta / 2.0 + 1e-12) return 1.0;
    return 0.0;
}

inline Vec desired_pattern_grid(const BeamGrid& grid, const ScenarioConfig& cfg) {
    Vec d(static_cast<Eigen::Index>(grid.psi.size()));
    for (std::size_t l = 0; l < grid.psi.size(); ++l)
        d[static_cast<Eigen::Index>(l)] = desired_pattern(grid.psi[l], cfg);
    return d;
}

// L_r(R) = (1/L) sum_l |d(psi_l) - P(psi_l)|^2. With normalize_pattern the
// obtained pattern is divided by its maximum first.
inline double beampattern_mse(const CMat& R_cov, const BeamGrid& grid, const ScenarioConfig& cfg) {
    Vec P = beam_pattern(R_cov, grid);
    if (cfg.normalize_pattern) {
        const double peak = P.maxCoeff();
        if (peak > 0.0) P /= peak;
    }
    const Vec d = desired_pattern_grid(grid, cfg);
    return (d - P).squaredNorm() / static_cast<double>(P.size());
}

// ---------------------------------------------------------------------------
// Target responses and the radar receive chain
// ---------------------------------------------------------------------------

struct TargetResponses {
    CMat A;  // M x M
    CMat B;  // N x N
    std::vector<Complex> alphas;
};

inline TargetResponses target_response(const ScenarioConfig& cfg,
                                       const std::vector<Complex>& alphas) {
    if (alphas.size() != cfg.target_angles.size())
        throw DimensionError("target_response: one alpha per target required");
    TargetResponses tr;
    tr.alphas = alphas;
    tr.A = CMat::Zero(cfg.M, cfg.M);
    tr.B = CMat::Zero(cfg.N, cfg.N);
    for (std::size_t k = 0; k < alphas.size(); ++k) {
        const double th = cfg.target_angles[k];
        const double up =
            k < cfg.target_elevations.size() ? cfg.target_elevations[k] : 0.0;
        const CVec a = ula_steering(th, cfg.M, cfg.d_over_lambda);
        tr.A += alphas[k] * (a * a.adjoint());
        const CVec v = upa_steering(up, th, cfg.N, cfg.d_over_lambda);
        tr.B += alphas[k] * (v * v.adjoint());
    }
    return tr;
}

// y_r = (H1^H V B V^H H1 + A) X + n_r
inline CMat radar_receive(const ChannelSet& cs, const PhaseConfig& pc, const TargetResponses& tr,
                          const CMat& X, const CMat& noise) {
    if (cs.H1.rows() != pc.V.rows() || tr.B.rows() != pc.V.rows())
        throw DimensionError("radar_receive: surface dimensions inconsistent");
    if (tr.A.rows() != cs.H1.cols() || X.rows() != tr.A.cols())
        throw DimensionError("radar_receive: BS dimensions inconsistent");
    const CMat chain = cs.H1.adjoint() * pc.V * tr.B * pc.V.adjoint() * cs.H1 + tr.A;
    CMat y = chain * X;
    if (noise.size() > 0) {
        if (noise.rows() != y.rows() || noise.cols() != y.cols())
            throw DimensionError("radar_receive: noise dimensions mismatch");
        y += noise;
    }
    return y;
}

// ---------------------------------------------------------------------------
// Beamformer and power projection
// ---------------------------------------------------------------------------

struct BeamformerW {
    CMat W;  // M x K (MISO) or M x R (per-user MIMO)

    CMat covariance() const { return W * W.adjoint(); }
};

// Enforces diag(W W^H)_mm <= P_max / M by rescaling offending rows.
inline BeamformerW power_projection(const CMat& W, const ScenarioConfig& cfg) {
    if (!all_finite(W)) throw ContractViolation("power_projection: W must be finite");
    const double cap = cfg.P_max / static_cast<double>(cfg.M);
    BeamformerW out{W};
    for (Eigen::Index m = 0; m < W.rows(); ++m) {
        const double d = W.row(m).squaredNorm();
        if (d > cap) out.W.row(m) *= std::sqrt(cap / d);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Step dynamics
// ---------------------------------------------------------------------------

struct EnvState {
    ChannelSet cs;
    PhaseConfig pc;
};

struct EnvAction {
    CMat W;            // full beamformer after projection
    IndexVec indices;  // next phase indices
};

struct StepResult {
    double reward = 0.0;  // f0 under the current effective channel
    Vec rates;            // per-user rates
    double l_r = 0.0;     // beam-pattern error of W W^H
    CMat next_H;          // effective channel after the phase update
    PhaseConfig next_pc;
};

// Channels stay fixed within an episode; the phase action only shifts the
// next effective channel.
inline StepResult env_step(const EnvState& state, const EnvAction& action,
                           const ScenarioConfig& cfg, const BeamGrid& grid) {
    StepResult out;
    const CMat H = effective_channel(state.cs, state.pc);
    const RateResult rr = sum_rate_reward(H, action.W, cfg);
    out.reward = rr.f0;
    out.rates = rr.per_user;
    out.l_r = beampattern_mse(action.W * action.W.adjoint(), grid, cfg);
    out.next_pc = phase_matrix(action.indices, cfg);
    out.next_H = effective_channel(state.cs, out.next_pc);
    return out;
}

// ---------------------------------------------------------------------------
// Owned environment used by the training loops (one per worker)
// ---------------------------------------------------------------------------

class Environment {
public:
    Environment(const ScenarioConfig& scenario, const ChannelSynthConfig& synth)
        : cfg_(scenario), synth_(synth), grid_(BeamGrid::build(scenario)) {
        cfg_.validate();
    }

    // New channel realization, uniform random initial phases, equal beams.
    void reset(Rng& rng) {
        cs_ = synthesize_channels(cfg_.M, cfg_.K, cfg_.N, cfg_.R, synth_, rng);
        IndexVec idx(static_cast<std::size_t>(cfg_.N));
        for (auto& i : idx) i = rng.uniform_int(cfg_.phase_levels());
        pc_ = phase_matrix(idx, cfg_);
        const double amp = std::sqrt(cfg_.P_max / static_cast<double>(cfg_.M * cfg_.K));
        W_ = CMat::Constant(cfg_.M, cfg_.K, Complex(amp, 0.0));
    }

    // Per-user MISO step: replace user k's beam, score, advance phases.
    StepResult step(int k, const CVec& w_k, const IndexVec& indices) {
        W_.col(k) = w_k;
        W_ = power_projection(W_, cfg_).W;
        StepResult res = env_step({cs_, pc_}, {W_, indices}, cfg_, grid_);
        pc_ = res.next_pc;
        return res;
    }

    // Whole-beamformer step: W is M x K in MISO, or the single user's M x R
    // block when this environment owns one user.
    StepResult step_full(const CMat& W, const IndexVec& indices) {
        W_ = power_projection(W, cfg_).W;
        StepResult res;
        if (cfg_.R == 1) {
            const CMat H = effective_channel(cs_, pc_);
            const RateResult rr = sum_rate_reward(H, W_, cfg_);
            res.reward = rr.f0;
            res.rates = rr.per_user;
        } else {
            require(cfg_.K == 1, "step_full: R > 1 requires a single-user environment");
            const double rate = mimo_user_rate(effective_channel_user(cs_, pc_, 0), W_, cfg_);
            res.reward = rate;
            res.rates = Vec::Constant(1, rate);
        }
        res.l_r = beampattern_mse(W_ * W_.adjoint(), grid_, cfg_);
        res.next_pc = phase_matrix(indices, cfg_);
        pc_ = res.next_pc;
        res.next_H = cfg_.K == 1 ? effective_channel_user(cs_, pc_, 0)
                                 : effective_channel(cs_, pc_);
        return res;
    }

    const ScenarioConfig& config() const { return cfg_; }
    const ChannelSet& channels() const { return cs_; }
    ChannelSet& channels_mutable() { return cs_; }
    const PhaseConfig& phases() const { return pc_; }
    const CMat& beams() const { return W_; }
    const BeamGrid& grid() const { return grid_; }

    CMat effective() const { return effective_channel(cs_, pc_); }
    CMat effective_user(int k) const { return effective_channel_user(cs_, pc_, k); }

    void set_beams(const CMat& W) { W_ = W; }
    void set_phases(const PhaseConfig& pc) { pc_ = pc; }

private:
    ScenarioConfig cfg_;
    ChannelSynthConfig synth_;
    BeamGrid grid_;
    ChannelSet cs_;
    PhaseConfig pc_;
    CMat W_;
};

}  // namespace isac

#endif  // ISAC_ENV_HPP
