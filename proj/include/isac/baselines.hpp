// SPDX-License-Identifier: Apache-2.0
//
// Classical comparison algorithms: zero-forcing and maximum-ratio transmit
// beamforming, the weighted-MMSE sum-rate solver, and the asynchronous
// actor-critic update used as the distributed-learning baseline.
#ifndef ISAC_BASELINES_HPP
#define ISAC_BASELINES_HPP

#include "isac/trainer.hpp"

#include <mutex>

namespace isac {

struct BaselineResult {
    CMat W;
    bool degraded = false;  // rank-deficient / zero-column fallback taken
};

// W = H (H^H H)^{-1} on the column channels (H_eff rows conjugated), scaled to
// equal per-user power and then uniformly into the per-antenna budget so the
// zero-forcing structure survives the power constraint.
inline BaselineResult zf_beamforming(const CMat& H_eff, const ScenarioConfig& cfg) {
    const Eigen::Index K = H_eff.rows();
    const Eigen::Index M = H_eff.cols();
    BaselineResult out;
    const CMat Hcols = H_eff.adjoint();  // M x K, column k = channel of user k
    const CMat gram = Hcols.adjoint() * Hcols;
    CMat W;
    const Eigen::JacobiSVD<CMat> svd(gram);
    const double cond = svd.singularValues()(0) /
                        std::max(svd.singularValues()(svd.singularValues().size() - 1), 1e-300);
    if (!std::isfinite(cond) || cond > 1e12) {
        out.degraded = true;
        const Eigen::CompleteOrthogonalDecomposition<CMat> cod(Hcols.adjoint());
        W = cod.pseudoInverse();  // M x K pseudo-inverse of H_eff
    } else {
        W = Hcols * gram.inverse();
    }
    // Equal per-user power split keeps columns orthogonal through scaling.
    const double per_user = cfg.P_max / static_cast<double>(K);
    for (Eigen::Index k = 0; k < K; ++k) {
        const double n = W.col(k).norm();
        if (n > 0.0) W.col(k) *= std::sqrt(per_user) / n;
    }
    // Uniform shrink into the per-antenna budget (projection then is a no-op).
    const double cap = cfg.P_max / static_cast<double>(M);
    double worst = 0.0;
    for (Eigen::Index m = 0; m < M; ++m) worst = std::max(worst, W.row(m).squaredNorm());
    if (worst > cap) W *= std::sqrt(cap / worst);
    out.W = W;
    return out;
}

// W_k proportional to the user's channel, equal power split, then projected.
inline BaselineResult mrt_beamforming(const CMat& H_eff, const ScenarioConfig& cfg) {
    const Eigen::Index K = H_eff.rows();
    const Eigen::Index M = H_eff.cols();
    BaselineResult out;
    out.W = CMat::Zero(M, K);
    const double per_user = std::sqrt(cfg.P_max / static_cast<double>(K));
    for (Eigen::Index k = 0; k < K; ++k) {
        const CVec h = H_eff.row(k).adjoint();
        const double n = h.norm();
        if (n == 0.0) {
            out.degraded = true;  // zero column stays zero
            continue;
        }
        out.W.col(k) = per_user * h / n;
    }
    out.W = power_projection(out.W, cfg).W;
    return out;
}

// ---------------------------------------------------------------------------
// WMMSE
// ---------------------------------------------------------------------------

struct WmmseState {
    std::vector<double> varsigma;   // weights, 1 / e_k
    std::vector<Complex> vartheta;  // scalar MMSE receivers
    CMat W;
    int iterations = 0;
};

struct WmmseResult {
    WmmseState state;
    std::vector<double> sum_rate_trace;  // per iteration
    bool divergence_flag = false;        // rate dropped beyond tolerance
};

namespace detail {

inline double wmmse_sum_rate(const CMat& H, const CMat& W, double sigma2) {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < H.rows(); ++k)
        acc += std::log2(1.0 + user_sinr(H, W, static_cast<int>(k), sigma2));
    return acc;
}

}  // namespace detail

// Block-coordinate weighted sum-MSE minimization on the effective channel.
// Receivers are scalar MMSE, e_k the resulting mean-square error, weights its
// inverse, and the beamformer update solves the weighted quadratic with a
// bisection on the power multiplier.
inline WmmseResult wmmse(const CMat& H_eff, double P_max, double sigma2, int iters,
                         const CMat& W_init = CMat()) {
    require(iters >= 1, "wmmse: iters must be >= 1");
    const Eigen::Index K = H_eff.rows();
    const Eigen::Index M = H_eff.cols();
    WmmseResult out;
    CMat W = W_init.size() > 0 ? W_init : CMat::Zero(M, K);
    if (W_init.size() == 0) {
        // matched-filter start at equal power
        for (Eigen::Index k = 0; k < K; ++k) {
            const CVec h = H_eff.row(k).adjoint();
            const double n = h.norm();
            W.col(k) = n > 0 ? CVec(std::sqrt(P_max / K) * h / n) : CVec(CVec::Zero(M));
        }
    }

    out.state.varsigma.assign(static_cast<std::size_t>(K), 1.0);
    out.state.vartheta.assign(static_cast<std::size_t>(K), Complex(0.0, 0.0));

    double last_rate = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < iters; ++it) {
        // Receivers and weights
        for (Eigen::Index k = 0; k < K; ++k) {
            const Complex g = (H_eff.row(k) * W.col(k))(0);
            double denom = sigma2;
            for (Eigen::Index l = 0; l < K; ++l) denom += std::norm((H_eff.row(k) * W.col(l))(0));
            const Complex rx = std::conj(g) / denom;
            double e = std::norm(rx * g - 1.0) + std::norm(rx) * sigma2;
            for (Eigen::Index l = 0; l < K; ++l)
                if (l != k) e += std::norm(rx * (H_eff.row(k) * W.col(l))(0));
            out.state.vartheta[static_cast<std::size_t>(k)] = rx;
            out.state.varsigma[static_cast<std::size_t>(k)] = 1.0 / e;
        }

        // Beamformer update: (sum_l s_l |u_l|^2 h_l h_l^H + nu I)^{-1} s_k u_k^* h_k
        CMat Acc = CMat::Zero(M, M);
        for (Eigen::Index l = 0; l < K; ++l) {
            const CVec h = H_eff.row(l).adjoint();
            Acc += out.state.varsigma[static_cast<std::size_t>(l)] *
                   std::norm(out.state.vartheta[static_cast<std::size_t>(l)]) * (h * h.adjoint());
        }
        auto solve_for = [&](double nu) {
            CMat A = Acc + nu * CMat::Identity(M, M);
            CMat Wn(M, K);
            const Eigen::LDLT<CMat> ldlt(A);
            for (Eigen::Index k = 0; k < K; ++k) {
                const CVec h = H_eff.row(k).adjoint();
                Wn.col(k) = ldlt.solve(out.state.varsigma[static_cast<std::size_t>(k)] *
                                       std::conj(out.state.vartheta[static_cast<std::size_t>(k)]) * h);
            }
            return Wn;
        };
        CMat Wn = solve_for(0.0);
        if (!all_finite(Wn) || Wn.squaredNorm() > P_max) {
            double lo = 0.0, hi = 1.0;
            while (solve_for(hi).squaredNorm() > P_max) hi *= 2.0;
            for (int b = 0; b < 200 && (hi - lo) > 1e-14 * std::max(1.0, hi); ++b) {
                const double mid = 0.5 * (lo + hi);
                if (solve_for(mid).squaredNorm() > P_max) lo = mid;
                else hi = mid;
            }
            Wn = solve_for(hi);
        }
        W = Wn;

        const double rate = detail::wmmse_sum_rate(H_eff, W, sigma2);
        if (rate < last_rate - 1e-6) out.divergence_flag = true;
        last_rate = rate;
        out.sum_rate_trace.push_back(rate);
        ++out.state.iterations;
    }
    out.state.W = W;
    return out;
}

// ---------------------------------------------------------------------------
// Asynchronous actor-critic baseline
// ---------------------------------------------------------------------------

struct A3cGlobal {
    DenseNet actor;
    DenseNet critic;
    std::mutex apply_mutex;  // parameter application is the only locked region
};

struct A3cGrads {
    NetGrads actor;
    NetGrads critic;
};

// omega <- omega + lr_a grad log pi (r - v); upsilon <- upsilon + lr_c d(r - v)/d upsilon.
// The critic direction follows the printed rule: the advantage's own partial.
inline void a3c_update(A3cGlobal& global, const A3cGrads& grads, double lr_actor,
                       double lr_critic) {
    std::lock_guard<std::mutex> lk(global.apply_mutex);
    for (std::size_t i = 0; i < global.actor.layers.size(); ++i) {
        global.actor.layers[i].W += lr_actor * grads.actor.dW[i];
        global.actor.layers[i].b += lr_actor * grads.actor.db[i];
    }
    for (std::size_t i = 0; i < global.critic.layers.size(); ++i) {
        global.critic.layers[i].W += lr_critic * grads.critic.dW[i];
        global.critic.layers[i].b += lr_critic * grads.critic.db[i];
    }
}

// One synchronous actor-critic step on a single transition; returns the
// gradients so workers can push them asynchronously.
inline A3cGrads a3c_local_grads(const DenseNet& actor, const DenseNet& critic,
                                const ActorHead& head, const Vec& obs, const Vec& action,
                                double reward) {
    A3cGrads out;
    const ForwardCache ac = actor.forward_batch(obs);
    const ForwardCache cc = critic.forward_batch(obs);
    const double v = cc.output(0, 0);
    const double adv = reward - v;

    const TruncGaussHead dist = head.apply(ac.output.col(0));
    const LogprobGrads lg = logprob_grads(dist, action);
    Mat upstream_a = Mat::Zero(actor.output_dim(), 1);
    upstream_a.col(0) = head.backward(ac.output.col(0), Vec(adv * lg.dmean), Vec(adv * lg.dstd));
    out.actor = actor.backward(ac, upstream_a);

    // d(r - v)/d upsilon = -dv/d upsilon
    Mat upstream_c = Mat::Zero(critic.output_dim(), 1);
    upstream_c(0, 0) = -1.0;
    out.critic = critic.backward(cc, upstream_c);
    return out;
}

}  // namespace isac

#endif  // ISAC_BASELINES_HPP
