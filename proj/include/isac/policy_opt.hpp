// SPDX-License-Identifier: Apache-2.0
//
// PPO objectives, advantage estimation, epsilon-greedy phase selection, and
// the critic update with its dual heads (state value + per-element Q-values
// over the discrete phase alphabet).
#ifndef ISAC_POLICY_OPT_HPP
#define ISAC_POLICY_OPT_HPP

#include "isac/tensor_nn.hpp"

#include <deque>

namespace isac {

enum class PpoMode { Clip, KlPenalty };

// The printed return convention excludes the current reward from the
// Monte-Carlo sum (t' > t) and repeats r^t inside the L-step window with a
// gamma^(L-1) bootstrap. Corrected is the conventional estimator.
enum class ReturnConvention { Printed, Corrected };

struct PpoConfig {
    double clip_eps = 0.2;
    double kl_coef = 1.0;
    double gamma = 0.9;
    double epsilon_greedy = 0.95;  // greedy probability by default
    bool epsilon_literal = false;  // true: treat it as the exploration probability
    int batch_size = 32;
    int epochs_per_update = 1;
    PpoMode mode = PpoMode::Clip;
    ReturnConvention convention = ReturnConvention::Printed;
    int lstep = 1;
    int replay_capacity = 10000;
    int target_sync_every = 100;
    bool normalize_advantages = true;

    double explore_prob() const {
        return epsilon_literal ? epsilon_greedy : 1.0 - epsilon_greedy;
    }

    void validate() const {
        if (!(clip_eps > 0.0)) throw ConfigError("PpoConfig: clip_eps must be positive");
        if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("PpoConfig: gamma must be in (0, 1]");
        if (!(epsilon_greedy >= 0.0 && epsilon_greedy <= 1.0))
            throw ConfigError("PpoConfig: epsilon_greedy must be in [0, 1]");
        if (batch_size < 1) throw ConfigError("PpoConfig: batch_size must be >= 1");
        if (lstep < 1) throw ConfigError("PpoConfig: lstep must be >= 1");
    }
};

// ---------------------------------------------------------------------------
// Trajectory records
// ---------------------------------------------------------------------------

struct Transition {
    Vec obs;        // real features of the observed channel
    CMat heff;      // full effective channel snapshot (for policy re-evaluation)
    Vec action;     // sampled beam coordinates
    double logprob_old = 0.0;
    Vec mean_old;
    Vec std_old;
    IndexVec phase_indices;
    double reward = 0.0;  // training reward (may carry the constraint term)
    double f0 = 0.0;      // raw sum rate
    Vec rates;            // per-user rates at this step
    double l_r = 0.0;
    Vec obs_next;
    int user = 0;
    long generation = 0;
};

struct TrajectoryBatch {
    std::vector<Transition> records;

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }
};

class ReplayMemory {
public:
    explicit ReplayMemory(int capacity = 10000) : capacity_(static_cast<std::size_t>(capacity)) {}

    void insert(Transition t) {
        if (buf_.size() == capacity_) buf_.pop_front();
        buf_.push_back(std::move(t));
    }

    std::size_t size() const { return buf_.size(); }

    // Uniform with replacement.
    TrajectoryBatch sample(int n, Rng& rng) const {
        require(!buf_.empty(), "ReplayMemory: cannot sample from empty memory");
        TrajectoryBatch batch;
        batch.records.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
            batch.records.push_back(buf_[static_cast<std::size_t>(rng.uniform_int(
                static_cast<int>(buf_.size())))]);
        return batch;
    }

private:
    std::size_t capacity_;
    std::deque<Transition> buf_;
};

// ---------------------------------------------------------------------------
// Advantage estimators
// ---------------------------------------------------------------------------

// A^t = sum_{t' > t} gamma^(t'-t) r^t' - v(H^t) by backward recursion
// (Corrected includes the t' = t term).
inline Vec advantage_mc(const Vec& rewards, const Vec& values, double gamma,
                        ReturnConvention conv = ReturnConvention::Printed) {
    const Eigen::Index T = rewards.size();
    if (T == 0) throw DimensionError("advantage_mc: empty batch");
    require(values.size() == T, "advantage_mc: values must align with rewards");
    Vec adv(T);
    double future = 0.0;  // sum_{t' > t} gamma^(t'-t) r^t'
    for (Eigen::Index t = T - 1; t >= 0; --t) {
        adv[t] = (conv == ReturnConvention::Printed ? future : rewards[t] + future) - values[t];
        future = gamma * (rewards[t] + future);
    }
    return adv;
}

// L-step advantage over an ordered slice; values has length T + 1, the last
// entry being the bootstrap of the state after the final transition. A
// horizon shorter than L truncates with terminal bootstrap 0.
inline Vec l_step_advantage(const Vec& rewards, const Vec& values, double gamma, int L,
                            ReturnConvention conv = ReturnConvention::Printed) {
    const Eigen::Index T = rewards.size();
    if (T == 0) throw DimensionError("l_step_advantage: empty batch");
    require(L >= 1, "l_step_advantage: L must be >= 1");
    require(values.size() == T + 1, "l_step_advantage: values must have length T + 1");
    Vec adv(T);
    for (Eigen::Index t = 0; t < T; ++t) {
        const Eigen::Index span = std::min<Eigen::Index>(L, T - t);
        const bool truncated = (t + L > T);
        double acc = 0.0;
        double g = 1.0;
        for (Eigen::Index l = 0; l < span; ++l) {
            acc += g * (conv == ReturnConvention::Printed ? rewards[t] : rewards[t + l]);
            g *= gamma;
        }
        if (!truncated) {
            const double boot = conv == ReturnConvention::Printed
                                    ? std::pow(gamma, static_cast<double>(L - 1))
                                    : std::pow(gamma, static_cast<double>(L));
            acc += boot * values[t + L];
        }
        adv[t] = acc - values[t];
    }
    return adv;
}

// ---------------------------------------------------------------------------
// PPO objectives
// ---------------------------------------------------------------------------

struct PpoClipResult {
    double loss = 0.0;          // mean surrogate (to be maximized)
    Vec grad_logprob;           // d(loss)/d(new_logprob) per record
    double mean_ratio = 0.0;
    int rejected = 0;           // records with non-finite ratios
};

inline PpoClipResult ppo_clip_loss(const Vec& new_logprob, const Vec& old_logprob,
                                   const Vec& advantages, double clip_eps) {
    const Eigen::Index n = new_logprob.size();
    require(old_logprob.size() == n && advantages.size() == n,
            "ppo_clip_loss: batch arrays must align");
    PpoClipResult out;
    out.grad_logprob = Vec::Zero(n);
    if (n == 0) return out;
    double acc = 0.0, racc = 0.0;
    int used = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double ratio = std::exp(new_logprob[i] - old_logprob[i]);
        if (!std::isfinite(ratio)) {
            ++out.rejected;
            continue;
        }
        const double a = advantages[i];
        const double unclipped = ratio * a;
        const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * a;
        acc += std::min(unclipped, clipped);
        racc += ratio;
        ++used;
        // Gradient flows only when the unclipped arm attains the min.
        if (unclipped <= clipped) out.grad_logprob[i] = ratio * a;
    }
    if (used > 0) {
        out.loss = acc / used;
        out.mean_ratio = racc / used;
        out.grad_logprob /= static_cast<double>(used);
    }
    return out;
}

// Closed-form KL between diagonal Gaussians, KL(p1 || p2), summed over dims.
inline double gaussian_kl(const Vec& mean1, const Vec& std1, const Vec& mean2, const Vec& std2) {
    require(mean1.size() == mean2.size() && std1.size() == std2.size() &&
                mean1.size() == std1.size(),
            "gaussian_kl: dimension mismatch");
    double kl = 0.0;
    for (Eigen::Index i = 0; i < mean1.size(); ++i) {
        require(std1[i] > 0.0 && std2[i] > 0.0, "gaussian_kl: std must be positive");
        const double r = std1[i] / std2[i];
        const double dm = (mean1[i] - mean2[i]) / std2[i];
        kl += std::log(std2[i] / std1[i]) + 0.5 * (r * r + dm * dm) - 0.5;
    }
    return kl;
}

struct GaussDist {
    Vec mean;
    Vec std;
};

struct PpoKlResult {
    double objective = 0.0;  // mean(ratio * A) - lambda_kl * mean KL(old || new)
    Vec grad_logprob;
    double mean_kl = 0.0;
};

inline PpoKlResult ppo_kl_loss(const Vec& new_logprob, const Vec& old_logprob,
                               const Vec& advantages, const std::vector<GaussDist>& new_dist,
                               const std::vector<GaussDist>& old_dist, double lambda_kl) {
    const Eigen::Index n = new_logprob.size();
    require(static_cast<Eigen::Index>(new_dist.size()) == n &&
                static_cast<Eigen::Index>(old_dist.size()) == n,
            "ppo_kl_loss: distribution arrays must align");
    PpoKlResult out;
    out.grad_logprob = Vec::Zero(n);
    if (n == 0) return out;
    double surr = 0.0, klsum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double ratio = std::exp(new_logprob[i] - old_logprob[i]);
        surr += ratio * advantages[i];
        out.grad_logprob[i] = ratio * advantages[i] / static_cast<double>(n);
        klsum += gaussian_kl(old_dist[static_cast<std::size_t>(i)].mean,
                             old_dist[static_cast<std::size_t>(i)].std,
                             new_dist[static_cast<std::size_t>(i)].mean,
                             new_dist[static_cast<std::size_t>(i)].std);
    }
    out.mean_kl = klsum / static_cast<double>(n);
    out.objective = surr / static_cast<double>(n) - lambda_kl * out.mean_kl;
    return out;
}

// ---------------------------------------------------------------------------
// Discrete phase selection
// ---------------------------------------------------------------------------

// Per element: random index with probability eps_explore, otherwise argmax,
// ties broken toward the lowest index.
inline IndexVec epsilon_greedy_phase(const Mat& q_values, double eps_explore, Rng& rng) {
    require(all_finite(q_values), "epsilon_greedy_phase: q_values must be finite");
    IndexVec out(static_cast<std::size_t>(q_values.rows()));
    const int actions = static_cast<int>(q_values.cols());
    for (Eigen::Index n = 0; n < q_values.rows(); ++n) {
        if (eps_explore > 0.0 && rng.uniform() < eps_explore) {
            out[static_cast<std::size_t>(n)] = rng.uniform_int(actions);
        } else {
            int best = 0;
            for (int a = 1; a < actions; ++a)
                if (q_values(n, a) > q_values(n, best)) best = a;
            out[static_cast<std::size_t>(n)] = best;
        }
    }
    return out;
}

inline IndexVec greedy_phase(const Mat& q_values) {
    Rng unused(0);
    return epsilon_greedy_phase(q_values, 0.0, unused);
}

// ---------------------------------------------------------------------------
// Critic update
// ---------------------------------------------------------------------------

// The critic outputs 1 + N * 2^b values: the state value followed by the
// per-element Q rows.
struct CriticView {
    static double value(const Vec& out) { return out[0]; }
    static Mat q_values(const Vec& out, int N, int levels) {
        require(out.size() == 1 + static_cast<Eigen::Index>(N) * levels,
                "CriticView: critic output size mismatch");
        Mat q(N, levels);
        for (int n = 0; n < N; ++n)
            for (int a = 0; a < levels; ++a) q(n, a) = out[1 + n * levels + a];
        return q;
    }
};

struct CriticUpdateStats {
    double value_loss = 0.0;
    double q_loss = 0.0;
};

// Value head regresses to bootstrapped discounted returns; the Q head uses
// the DQN-style target r + gamma max_a Q_target(next, a) at the chosen index.
// `value_targets` may be empty, in which case the TD target from the frozen
// copy is used.
inline CriticUpdateStats critic_update(const TrajectoryBatch& batch, DenseNet& critic,
                                       const DenseNet& target_critic, AdamState& adam,
                                       double gamma, double lr, int N, int levels,
                                       const Vec& value_targets = Vec()) {
    require(!batch.empty(), "critic_update: batch must be nonempty");
    const int B = static_cast<int>(batch.size());
    const int in_dim = critic.input_dim();
    Mat X(in_dim, B), Xn(in_dim, B);
    for (int i = 0; i < B; ++i) {
        X.col(i) = batch.records[static_cast<std::size_t>(i)].obs;
        Xn.col(i) = batch.records[static_cast<std::size_t>(i)].obs_next;
    }

    const ForwardCache cache = critic.forward_batch(X);
    const ForwardCache next_cache = target_critic.forward_batch(Xn);

    Mat upstream = Mat::Zero(critic.output_dim(), B);
    CriticUpdateStats stats;
    for (int i = 0; i < B; ++i) {
        const auto& rec = batch.records[static_cast<std::size_t>(i)];
        const Vec next_out = next_cache.output.col(i);
        const double v_pred = cache.output(0, i);
        const double v_target = value_targets.size() == B
                                    ? value_targets[i]
                                    : rec.reward + gamma * CriticView::value(next_out);
        const double v_err = v_pred - v_target;
        stats.value_loss += v_err * v_err;
        upstream(0, i) = v_err / B;

        for (int n = 0; n < N; ++n) {
            double qmax = next_out[1 + n * levels];
            for (int a = 1; a < levels; ++a)
                qmax = std::max(qmax, next_out[1 + n * levels + a]);
            const double target = rec.reward + gamma * qmax;
            const int chosen = rec.phase_indices[static_cast<std::size_t>(n)];
            const double q_pred = cache.output(1 + n * levels + chosen, i);
            const double q_err = q_pred - target;
            stats.q_loss += q_err * q_err;
            upstream(1 + n * levels + chosen, i) = q_err / (B * N);
        }
    }
    stats.value_loss /= B;
    stats.q_loss /= std::max(1, B * N);

    AdamConfig ac;
    ac.lr = lr;
    adam.step(critic, critic.backward(cache, upstream), ac);
    return stats;
}

}  // namespace isac

#endif  // ISAC_POLICY_OPT_HPP
