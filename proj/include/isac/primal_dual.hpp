// SPDX-License-Identifier: Apache-2.0
//
// Constrained-learning layer: the Lagrangian over (omega, x, lambda, mu),
// zeroth-order gradient estimates from truncated-normal probes, and the
// projected primal-dual iteration. Multipliers stay on the positive orthant.
#ifndef ISAC_PRIMAL_DUAL_HPP
#define ISAC_PRIMAL_DUAL_HPP

#include "isac/isac_env.hpp"

#include <functional>

namespace isac {

// The printed x-update carries a trailing "-1"; the analytic variant uses
// "-lambda" (the actual partial of the Lagrangian in x).
enum class XUpdateVariant { Printed, Analytic };

struct PrimalDualState {
    Vec x;       // ergodic variables, length K
    Vec lambda;  // rate multipliers, length K, >= 0
    double mu = 0.0;  // radar multiplier, >= 0
    double tau1 = 1e-3, tau2 = 1e-3, tau3 = 1e-3, tau4 = 1e-3;
    double alpha1 = 1e-3, alpha2 = 1e-3, alpha3 = 1e-3;
    double probe_trunc = 2.0;
    XUpdateVariant variant = XUpdateVariant::Printed;

    static PrimalDualState init(int K) {
        PrimalDualState s;
        s.x = Vec::Zero(K);
        s.lambda = Vec::Zero(K);
        return s;
    }

    void validate() const {
        require(tau1 > 0.0 && tau2 > 0.0 && tau3 > 0.0 && tau4 > 0.0,
                "PrimalDualState: step sizes must be positive");
        require(alpha1 > 0.0 && alpha2 > 0.0 && alpha3 > 0.0,
                "PrimalDualState: probe scales must be positive");
        require((lambda.array() >= 0.0).all() && mu >= 0.0,
                "PrimalDualState: multipliers must be nonnegative");
    }
};

// f2 = ell - L_r(R); positive iff the beam-pattern constraint holds.
inline double radar_slack(const CMat& R_cov, double ell, const BeamGrid& grid,
                          const ScenarioConfig& cfg) {
    return ell - beampattern_mse(R_cov, grid, cfg);
}

inline double radar_slack(double l_r, double ell) { return ell - l_r; }

// L = f0(x) + mu f2 + lambda^T (E[f1] - x)
inline double lagrangian(const PrimalDualState& s, double f0_val, const Vec& ef1, double f2_val) {
    require(ef1.size() == s.x.size(), "lagrangian: E[f1] must align with x");
    return f0_val + s.mu * f2_val + s.lambda.dot(ef1 - s.x);
}

// ---------------------------------------------------------------------------
// Zeroth-order gradient estimates
// ---------------------------------------------------------------------------

using ScalarFn = std::function<double(const Vec&)>;
using VectorFn = std::function<Vec(const Vec&)>;

// ghat = ((f(x0 + alpha p) - f(x0)) / alpha) p with a truncated-normal probe p.
inline Vec zo_grad_f0(const ScalarFn& f0, const Vec& x0, double alpha1, Rng& rng,
                      double trunc = 2.0) {
    require(alpha1 > 0.0, "zo_grad_f0: alpha must be positive");
    const Vec probe = rng.truncated_normal_vec(x0.size(), trunc);
    const double diff = (f0(x0 + alpha1 * probe) - f0(x0)) / alpha1;
    return diff * probe;
}

// Jacobian estimate: ((f2(x0 + alpha p) - f2(x0)) / alpha) p^T, m x n.
inline Mat zo_grad_f2(const VectorFn& f2, const Vec& x0, double alpha2, Rng& rng,
                      double trunc = 2.0) {
    require(alpha2 > 0.0, "zo_grad_f2: alpha must be positive");
    const Vec probe = rng.truncated_normal_vec(x0.size(), trunc);
    const Vec diff = (f2(x0 + alpha2 * probe) - f2(x0)) / alpha2;
    return diff * probe.transpose();
}

// Same scheme in policy-parameter space; F is typically the batch-mean
// lambda-weighted instantaneous performance of the perturbed policy.
inline Vec zo_grad_policy(const ScalarFn& f1_of_omega, const Vec& omega0, double alpha3,
                          Rng& rng, double trunc = 2.0) {
    require(alpha3 > 0.0, "zo_grad_policy: alpha must be positive");
    const Vec probe = rng.truncated_normal_vec(omega0.size(), trunc);
    const double diff = (f1_of_omega(omega0 + alpha3 * probe) - f1_of_omega(omega0)) / alpha3;
    return diff * probe;
}

// Variant with a caller-supplied probe (used when the probe must come from a
// specific stream position).
inline Vec zo_grad_with_probe(const ScalarFn& f, const Vec& x0, const Vec& probe, double alpha) {
    require(alpha > 0.0, "zo_grad_with_probe: alpha must be positive");
    const double diff = (f(x0 + alpha * probe) - f(x0)) / alpha;
    return diff * probe;
}

// ---------------------------------------------------------------------------
// Primal-dual step
// ---------------------------------------------------------------------------

struct PdEstimates {
    Vec grad_omega;  // estimate of grad_omega (lambda^T E[f1])
    Vec grad_f0;     // estimate of grad f0 at x
    Mat jac_f2;      // estimate of the f2 Jacobian at x (rows per constraint)
    Vec ef1;         // batch estimate of E[f1]
    double f2_val = 0.0;
};

struct PdStepResult {
    bool accepted = false;
    Vec omega_delta;  // tau1-scaled increment the caller applies to the actor
};

// omega <- omega + tau1 ghat_omega
// x     <- x + tau2 (ghat_f0 + jac_f2^T mu - 1)        (printed; -lambda analytic)
// lambda<- [lambda - tau3 (E[f1] - x)]_+
// mu    <- [mu - tau4 f2]_+
// Non-finite estimates reject the whole step and leave the state unchanged.
inline PdStepResult primal_dual_step(PrimalDualState& s, const PdEstimates& est) {
    PdStepResult out;
    const bool finite = est.grad_omega.allFinite() && est.grad_f0.allFinite() &&
                        est.jac_f2.allFinite() && est.ef1.allFinite() &&
                        std::isfinite(est.f2_val);
    if (!finite) {
        out.omega_delta = Vec::Zero(est.grad_omega.size());
        return out;
    }
    require(est.grad_f0.size() == s.x.size(), "primal_dual_step: grad_f0 size mismatch");
    require(est.ef1.size() == s.x.size(), "primal_dual_step: ef1 size mismatch");
    require(est.jac_f2.cols() == s.x.size(), "primal_dual_step: jac_f2 shape mismatch");

    out.accepted = true;
    out.omega_delta = s.tau1 * est.grad_omega;

    const Vec mu_term = est.jac_f2.transpose() * Vec::Constant(est.jac_f2.rows(), s.mu);
    const Vec offset = s.variant == XUpdateVariant::Printed
                           ? Vec::Ones(s.x.size())
                           : Vec(s.lambda);
    s.x += s.tau2 * (est.grad_f0 + mu_term - offset);

    s.lambda = (s.lambda - s.tau3 * (est.ef1 - s.x)).cwiseMax(0.0);
    s.mu = std::max(0.0, s.mu - s.tau4 * est.f2_val);
    return out;
}

}  // namespace isac

#endif  // ISAC_PRIMAL_DUAL_HPP
