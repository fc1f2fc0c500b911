// SPDX-License-Identifier: Apache-2.0
//
// The primal-dual PPO trainer. One instance owns the global learner state
// (actor, critic + target copy, replay, multipliers) and exposes the shared
// collect / update pipeline used by both the single-environment training
// loop and the multi-worker runtime.
#ifndef ISAC_TRAINER_HPP
#define ISAC_TRAINER_HPP

#include "isac/isac_env.hpp"
#include "isac/policy_opt.hpp"
#include "isac/primal_dual.hpp"

#include <functional>

namespace isac {

enum class ActorUpdate { PpoClip, PpoKl, PolicyGradient };
enum class DataMode { ReplaySample, FreshBatch };

struct TrainConfig {
    int episodes = 500;
    int steps_per_episode = 50;
    double lr_actor = 1e-3;
    double lr_critic = 2e-3;
    PpoConfig ppo;
    double tau = 1e-3;    // primal-dual step sizes tau1..tau4
    double alpha = 1e-3;  // probe scales alpha1..alpha3
    XUpdateVariant x_variant = XUpdateVariant::Printed;
    ActorUpdate actor_update = ActorUpdate::PpoClip;
    DataMode data_mode = DataMode::ReplaySample;
    int update_every = 1;  // user-steps between updates in replay mode
    bool constraint_in_reward = true;  // fold mu (ell - L_r) into the training reward
    int actor_hidden = 30;
    int critic_hidden = 20;
    double std_init_frac = 0.25;  // initial policy std as a fraction of the bound
    double min_std_frac = 0.01;
    int zo_batch = 32;  // records used for the zeroth-order policy probe
};

// ---------------------------------------------------------------------------
// Actor head: raw net outputs -> bounded mean (tanh) and positive std
// (softplus), with the chain-rule back into the raw outputs.
// ---------------------------------------------------------------------------

struct ActorHead {
    int dim = 0;        // action coordinates
    double bound = 1.0; // actions live in [-bound, bound]
    double std_scale = 1.0;
    double min_std = 1e-3;

    static ActorHead make(int action_dim, double bound, double std_init_frac,
                          double min_std_frac) {
        ActorHead h;
        h.dim = action_dim;
        h.bound = bound;
        h.min_std = min_std_frac * bound;
        // softplus(0) = log 2; zero-centered raw outputs start near the target std
        h.std_scale = std_init_frac * bound / std::log(2.0);
        return h;
    }

    TruncGaussHead apply(const Vec& raw) const {
        require(raw.size() == 2 * dim, "ActorHead: raw output size mismatch");
        TruncGaussHead out;
        out.low = -bound;
        out.high = bound;
        out.mean.resize(dim);
        out.std.resize(dim);
        for (int i = 0; i < dim; ++i) {
            out.mean[i] = bound * std::tanh(raw[i]);
            out.std[i] = min_std + std_scale * apply_activation(Activation::Softplus, raw[dim + i]);
        }
        return out;
    }

    Vec backward(const Vec& raw, const Vec& dmean, const Vec& dstd) const {
        Vec draw(2 * dim);
        for (int i = 0; i < dim; ++i) {
            const double t = std::tanh(raw[i]);
            draw[i] = dmean[i] * bound * (1.0 - t * t);
            draw[dim + i] = dstd[i] * std_scale * activation_grad(Activation::Softplus, raw[dim + i]);
        }
        return draw;
    }
};

// ---------------------------------------------------------------------------
// Observation / action codecs
// ---------------------------------------------------------------------------

inline Vec flatten_cmat(const CMat& m) {
    Vec out(2 * m.size());
    const auto* data = m.data();
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        out[2 * i] = data[i].real();
        out[2 * i + 1] = data[i].imag();
    }
    return out;
}

inline CMat action_to_beam(const Vec& action, Eigen::Index rows, Eigen::Index cols) {
    require(action.size() == 2 * rows * cols, "action_to_beam: size mismatch");
    CMat w(rows, cols);
    for (Eigen::Index i = 0; i < rows * cols; ++i)
        w.data()[i] = Complex(action[2 * i], action[2 * i + 1]);
    return w;
}

// ---------------------------------------------------------------------------
// Collection context: one environment plus its private streams
// ---------------------------------------------------------------------------

struct CollectContext {
    Environment env;
    Rng env_rng;      // channel synthesis and episode initialization
    Rng collect_rng;  // policy sampling and exploration
    int worker_id = 0;
    int step_in_episode = 0;

    CollectContext(const ScenarioConfig& scen, const ChannelSynthConfig& synth, Rng env_stream,
                   Rng collect_stream, int id = 0)
        : env(scen, synth), env_rng(env_stream), collect_rng(collect_stream), worker_id(id) {}

    void begin_episode() {
        env.reset(env_rng);
        step_in_episode = 0;
    }
};

struct StepTrace {
    long episode = 0;
    int step = 0;
    int user = 0;
    Mat q_values;
    IndexVec chosen;
    double f0 = 0.0;
    double l_r = 0.0;
};

using StepObserver = std::function<void(const StepTrace&)>;

struct UpdateStats {
    long update_idx = 0;
    double clip_loss = 0.0;
    double value_loss = 0.0;
    double q_loss = 0.0;
    double mean_ratio = 1.0;
    double kl = 0.0;
    double f2 = 0.0;
    bool pd_accepted = false;
};

struct EpisodeLog {
    long episode = 0;
    double mean_f0 = 0.0;
    double mean_reward = 0.0;
    double mean_lr = 0.0;
    double constraint_ok = 0.0;  // fraction of steps with L_r <= ell
    Vec x;
    Vec lambda;
    double mu = 0.0;
    double f2 = 0.0;
};

struct TrainingLog {
    std::vector<EpisodeLog> episodes;
    std::vector<UpdateStats> updates;
    CMat final_W;
    IndexVec final_indices;
};

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

class PrimalDualPpoTrainer {
public:
    PrimalDualPpoTrainer(const ScenarioConfig& scen, const ChannelSynthConfig& synth,
                         const TrainConfig& tc, std::uint64_t seed)
        : scen_(scen),
          synth_(synth),
          tc_(tc),
          replay_(tc.ppo.replay_capacity),
          pd_(PrimalDualState::init(scen.K)),
          root_(seed),
          update_rng_(Rng(seed).derive(3, 0)) {
        scen_.validate();
        tc_.ppo.validate();
        pd_.tau1 = pd_.tau2 = pd_.tau3 = pd_.tau4 = tc_.tau;
        pd_.alpha1 = pd_.alpha2 = pd_.alpha3 = tc_.alpha;
        pd_.variant = tc_.x_variant;

        const int obs_dim = 2 * scen_.M * scen_.R;
        action_dim_ = 2 * scen_.M * scen_.R;  // one complex beam block per step
        const double bound = std::sqrt(scen_.P_max / static_cast<double>(scen_.M));
        head_ = ActorHead::make(action_dim_, bound, tc_.std_init_frac, tc_.min_std_frac);

        Rng init_rng = Rng(seed).derive(0, 0);
        actor_ = DenseNet({obs_dim, tc_.actor_hidden, 2 * action_dim_}, Activation::ReLU,
                          Activation::Identity, init_rng);
        const int critic_out = 1 + scen_.N * scen_.phase_levels();
        critic_ = DenseNet({obs_dim, tc_.critic_hidden, critic_out}, Activation::ReLU,
                           Activation::Identity, init_rng);
        critic_target_ = critic_;
        adam_actor_ = AdamState(actor_);
        adam_critic_ = AdamState(critic_);
    }

    const ScenarioConfig& scenario() const { return scen_; }
    const TrainConfig& train_config() const { return tc_; }
    const DenseNet& actor() const { return actor_; }
    const DenseNet& critic() const { return critic_; }
    const PrimalDualState& pd_state() const { return pd_; }
    PrimalDualState& pd_state_mutable() { return pd_; }
    const ActorHead& head() const { return head_; }
    long updates_done() const { return update_count_; }
    long generation() const { return update_count_; }

    CollectContext make_context(int worker_id) const {
        return CollectContext(worker_scenario(), synth_, root_.derive(1, worker_id),
                              root_.derive(2, worker_id), worker_id);
    }

    // Worker-local copies of the environment config: the multi-worker runtime
    // gives each worker one user (K = 1 slice); the single-environment loop
    // keeps all K users.
    ScenarioConfig worker_scenario() const {
        ScenarioConfig s = scen_;
        if (multi_worker_mode_) s.K = 1;
        return s;
    }

    void set_multi_worker_mode(bool on) { multi_worker_mode_ = on; }
    bool multi_worker_mode() const { return multi_worker_mode_; }

    // -----------------------------------------------------------------------
    // Collection (Algorithm steps b .. h before the updates)
    // -----------------------------------------------------------------------

    Transition collect_one(CollectContext& ctx, int user_k, const DenseNet& actor_snapshot,
                           const DenseNet& critic_snapshot, long episode,
                           const StepObserver& observer = StepObserver()) const {
        const ScenarioConfig& ecfg = ctx.env.config();
        const bool per_user_env = ecfg.K == 1 && multi_worker_mode_;
        Transition tr;
        tr.user = user_k;
        tr.generation = update_count_;

        const CMat heff = per_user_env || ecfg.K == 1
                              ? ctx.env.effective_user(0)
                              : ctx.env.effective();
        tr.heff = heff;
        tr.obs = flatten_cmat(ecfg.K == 1 ? heff : CMat(heff.row(user_k)));

        const Vec raw = actor_snapshot.forward(tr.obs);
        const TruncGaussHead dist = head_.apply(raw);
        const SampleResult sample = sample_and_logprob(dist, ctx.collect_rng);
        tr.action = sample.action;
        tr.logprob_old = sample.logprob;
        tr.mean_old = dist.mean;
        tr.std_old = dist.std;

        const Vec critic_out = critic_snapshot.forward(tr.obs);
        const Mat q = CriticView::q_values(critic_out, ecfg.N, ecfg.phase_levels());
        tr.phase_indices = epsilon_greedy_phase(q, tc_.ppo.explore_prob(), ctx.collect_rng);

        const CMat w = action_to_beam(tr.action, ecfg.M, ecfg.R);
        const StepResult res = ecfg.K == 1 ? ctx.env.step_full(w, tr.phase_indices)
                                           : ctx.env.step(user_k, w.col(0), tr.phase_indices);
        tr.f0 = res.reward;
        tr.rates = Vec::Zero(scen_.K);
        if (ecfg.K == 1) {
            tr.rates[user_k] = res.reward;
        } else {
            tr.rates = res.rates;
        }
        tr.l_r = res.l_r;
        tr.reward = tr.f0;
        if (tc_.constraint_in_reward) tr.reward += pd_.mu * (scen_.ell - tr.l_r);
        tr.obs_next = flatten_cmat(ecfg.K == 1 ? res.next_H : CMat(res.next_H.row(user_k)));

        if (observer) {
            StepTrace trace;
            trace.episode = episode;
            trace.step = ctx.step_in_episode;
            trace.user = user_k;
            trace.q_values = q;
            trace.chosen = tr.phase_indices;
            trace.f0 = tr.f0;
            trace.l_r = tr.l_r;
            observer(trace);
        }
        return tr;
    }

    // -----------------------------------------------------------------------
    // Update pipeline (Algorithm steps h .. j)
    // -----------------------------------------------------------------------

    // `slices` partitions the batch into time-ordered runs (start, length);
    // replay samples use singleton slices.
    UpdateStats update_on_batch(const TrajectoryBatch& batch,
                                const std::vector<std::pair<int, int>>& slices) {
        UpdateStats stats;
        stats.update_idx = update_count_;
        if (batch.empty()) {
            ++update_count_;  // an empty pool still advances the generation
            return stats;
        }

        const int B = static_cast<int>(batch.size());
        Mat X(actor_.input_dim(), B);
        for (int i = 0; i < B; ++i) X.col(i) = batch.records[static_cast<std::size_t>(i)].obs;

        const Vec advantages = compute_advantages(batch, slices);
        Vec adv = advantages;
        if (tc_.ppo.normalize_advantages && B > 1) {
            const double mean = adv.mean();
            const double sd = std::sqrt((adv.array() - mean).square().sum() / B);
            if (sd > 1e-12) adv = (adv.array() - mean) / sd;
            else adv = (adv.array() - mean).matrix();
        }

        for (int epoch = 0; epoch < tc_.ppo.epochs_per_update; ++epoch)
            actor_epoch(batch, X, adv, stats);

        const Vec value_targets = value_targets_for(batch, slices);
        const CriticUpdateStats cs = critic_update(batch, critic_, critic_target_, adam_critic_,
                                                   tc_.ppo.gamma, tc_.lr_critic, scen_.N,
                                                   scen_.phase_levels(), value_targets);
        stats.value_loss = cs.value_loss;
        stats.q_loss = cs.q_loss;
        ++critic_updates_;
        if (critic_updates_ % tc_.ppo.target_sync_every == 0) critic_target_ = critic_;

        primal_dual_update(batch, stats);

        ++update_count_;
        return stats;
    }

    // -----------------------------------------------------------------------
    // Single-environment training loop (the MISO algorithm)
    // -----------------------------------------------------------------------

    TrainingLog train(const StepObserver& observer = StepObserver()) {
        CollectContext ctx = make_context(0);
        TrainingLog log;
        TrajectoryBatch pending;
        const int horizon = std::max(1, tc_.update_every);

        for (long e = 0; e < tc_.episodes; ++e) {
            ctx.begin_episode();
            EpisodeLog el;
            el.episode = e;
            int steps = 0;
            for (int t = 0; t < tc_.steps_per_episode; ++t) {
                ctx.step_in_episode = t;
                for (int k = 0; k < scen_.K && !multi_worker_mode_; ++k) {
                    Transition tr = collect_one(ctx, k, actor_, critic_, e, observer);
                    el.mean_f0 += tr.f0;
                    el.mean_reward += tr.reward;
                    el.mean_lr += tr.l_r;
                    el.constraint_ok += tr.l_r <= scen_.ell ? 1.0 : 0.0;
                    ++steps;
                    if (tc_.data_mode == DataMode::ReplaySample) {
                        replay_.insert(std::move(tr));
                        if (steps_since_update_ + 1 >= tc_.update_every) {
                            const TrajectoryBatch batch =
                                replay_.sample(tc_.ppo.batch_size, update_rng_);
                            log.updates.push_back(update_on_batch(batch, singleton_slices(batch)));
                            steps_since_update_ = 0;
                        } else {
                            ++steps_since_update_;
                        }
                    } else {
                        pending.records.push_back(std::move(tr));
                        if (static_cast<int>(pending.size()) >= horizon) {
                            log.updates.push_back(update_on_batch(
                                pending, {{0, static_cast<int>(pending.size())}}));
                            pending.records.clear();
                        }
                    }
                }
            }
            if (steps > 0) {
                el.mean_f0 /= steps;
                el.mean_reward /= steps;
                el.mean_lr /= steps;
                el.constraint_ok /= steps;
            }
            el.x = pd_.x;
            el.lambda = pd_.lambda;
            el.mu = pd_.mu;
            el.f2 = scen_.ell - el.mean_lr;
            log.episodes.push_back(std::move(el));
        }
        log.final_W = ctx.env.beams();
        log.final_indices = ctx.env.phases().indices;
        return log;
    }

    // -----------------------------------------------------------------------
    // Evaluation helpers
    // -----------------------------------------------------------------------

    // Mean sum rate under the deterministic (mean) policy with greedy phases.
    double greedy_capacity(int episodes, int steps, Rng env_stream) const {
        require(scen_.R == 1, "greedy_capacity: single-antenna users only");
        CollectContext ctx(scen_, synth_, env_stream, env_stream.derive(9, 1), 0);
        double acc = 0.0;
        long n = 0;
        for (int e = 0; e < episodes; ++e) {
            ctx.begin_episode();
            for (int t = 0; t < steps; ++t) {
                for (int k = 0; k < scen_.K; ++k) {
                    const CMat heff = ctx.env.effective();
                    const Vec obs = flatten_cmat(CMat(heff.row(k)));
                    const TruncGaussHead dist = head_.apply(actor_.forward(obs));
                    const Mat q = CriticView::q_values(critic_.forward(obs), scen_.N,
                                                       scen_.phase_levels());
                    const StepResult res =
                        ctx.env.step(k, action_to_beam(dist.mean, scen_.M, 1).col(0),
                                     greedy_phase(q));
                    acc += res.reward;
                    ++n;
                }
            }
        }
        return n ? acc / static_cast<double>(n) : 0.0;
    }

    // Frozen-policy random beamforming baseline on the same channel model.
    double random_capacity(int episodes, int steps, Rng env_stream) const {
        require(scen_.R == 1, "random_capacity: single-antenna users only");
        CollectContext ctx(scen_, synth_, env_stream, env_stream.derive(9, 2), 0);
        Rng act_rng = env_stream.derive(9, 3);
        double acc = 0.0;
        long n = 0;
        const double amp = std::sqrt(scen_.P_max / static_cast<double>(scen_.M * scen_.K * 2));
        for (int e = 0; e < episodes; ++e) {
            ctx.begin_episode();
            for (int t = 0; t < steps; ++t) {
                for (int k = 0; k < scen_.K; ++k) {
                    CVec w(scen_.M);
                    for (int m = 0; m < scen_.M; ++m)
                        w[m] = amp * Complex(act_rng.normal(), act_rng.normal());
                    IndexVec idx(static_cast<std::size_t>(scen_.N));
                    for (auto& i : idx) i = act_rng.uniform_int(scen_.phase_levels());
                    acc += ctx.env.step(k, w, idx).reward;
                    ++n;
                }
            }
        }
        return n ? acc / static_cast<double>(n) : 0.0;
    }

    // Bitwise-comparable serialization of all learned parameters.
    std::string serialize_params() const {
        std::ostringstream ss;
        save_checkpoint(actor_, ss);
        save_checkpoint(critic_, ss);
        ss << format_double_hex(pd_.mu) << '\n';
        for (Eigen::Index i = 0; i < pd_.x.size(); ++i)
            ss << format_double_hex(pd_.x[i]) << ',' << format_double_hex(pd_.lambda[i]) << '\n';
        return ss.str();
    }

    DenseNet& actor_mutable() { return actor_; }
    DenseNet& critic_mutable() { return critic_; }

    // Deterministic per-user rates of the (mean) policy on a channel snapshot.
    Vec policy_rates(const CMat& heff, const DenseNet& actor_params, int user = 0) const {
        if (heff.rows() == scen_.K && scen_.R == 1 && !multi_worker_mode_) {
            Mat X(actor_params.input_dim(), scen_.K);
            for (int j = 0; j < scen_.K; ++j) X.col(j) = flatten_cmat(CMat(heff.row(j)));
            const Mat raw = actor_params.forward_batch(X).output;
            CMat W(scen_.M, scen_.K);
            for (int j = 0; j < scen_.K; ++j)
                W.col(j) = action_to_beam(head_.apply(raw.col(j)).mean, scen_.M, 1).col(0);
            W = power_projection(W, scen_).W;
            ScenarioConfig cfg = scen_;
            Vec rates(scen_.K);
            for (int j = 0; j < scen_.K; ++j)
                rates[j] = rate_from_sinr(user_sinr(heff, W, j, cfg.sigma_c2), cfg.rate_log2);
            return rates;
        }
        // Per-user snapshot (multi-worker): heff is R x M for one user.
        const Vec raw = actor_params.forward(flatten_cmat(heff));
        CMat W = action_to_beam(head_.apply(raw).mean, scen_.M, scen_.R);
        W = power_projection(W, scen_).W;
        Vec rates = Vec::Zero(scen_.K);
        rates[user] = mimo_user_rate(heff, W, scen_);
        return rates;
    }

private:
    static std::vector<std::pair<int, int>> singleton_slices(const TrajectoryBatch& batch) {
        std::vector<std::pair<int, int>> s;
        for (int i = 0; i < static_cast<int>(batch.size()); ++i) s.push_back({i, 1});
        return s;
    }

    Vec compute_advantages(const TrajectoryBatch& batch,
                           const std::vector<std::pair<int, int>>& slices) const {
        const int B = static_cast<int>(batch.size());
        Vec adv(B);
        for (const auto& [start, len] : slices) {
            Vec rewards(len);
            Vec values(len + 1);
            for (int i = 0; i < len; ++i) {
                const auto& rec = batch.records[static_cast<std::size_t>(start + i)];
                rewards[i] = rec.reward;
                values[i] = CriticView::value(critic_.forward(rec.obs));
            }
            values[len] = CriticView::value(
                critic_.forward(batch.records[static_cast<std::size_t>(start + len - 1)].obs_next));
            const Vec a = l_step_advantage(rewards, values, tc_.ppo.gamma, tc_.ppo.lstep,
                                           tc_.ppo.convention);
            for (int i = 0; i < len; ++i) adv[start + i] = a[i];
        }
        return adv;
    }

    Vec value_targets_for(const TrajectoryBatch& batch,
                          const std::vector<std::pair<int, int>>& slices) const {
        const int B = static_cast<int>(batch.size());
        Vec targets(B);
        for (const auto& [start, len] : slices) {
            // Bootstrapped discounted return over the slice, frozen-copy tail.
            Vec future(len + 1);
            future[len] = CriticView::value(critic_target_.forward(
                batch.records[static_cast<std::size_t>(start + len - 1)].obs_next));
            for (int i = len - 1; i >= 0; --i)
                future[i] = batch.records[static_cast<std::size_t>(start + i)].reward +
                            tc_.ppo.gamma * future[i + 1];
            for (int i = 0; i < len; ++i) targets[start + i] = future[i];
        }
        return targets;
    }

    void actor_epoch(const TrajectoryBatch& batch, const Mat& X, const Vec& adv,
                     UpdateStats& stats) {
        const int B = static_cast<int>(batch.size());
        const ForwardCache cache = actor_.forward_batch(X);

        Vec new_logprob(B), old_logprob(B);
        std::vector<TruncGaussHead> dists(static_cast<std::size_t>(B));
        for (int i = 0; i < B; ++i) {
            const auto& rec = batch.records[static_cast<std::size_t>(i)];
            dists[static_cast<std::size_t>(i)] = head_.apply(cache.output.col(i));
            new_logprob[i] = logprob(dists[static_cast<std::size_t>(i)], rec.action);
            old_logprob[i] = rec.logprob_old;
        }

        Vec grad_logprob;
        if (tc_.actor_update == ActorUpdate::PpoClip) {
            const PpoClipResult res =
                ppo_clip_loss(new_logprob, old_logprob, adv, tc_.ppo.clip_eps);
            stats.clip_loss = res.loss;
            stats.mean_ratio = res.mean_ratio;
            grad_logprob = res.grad_logprob;
        } else if (tc_.actor_update == ActorUpdate::PpoKl) {
            std::vector<GaussDist> nd(static_cast<std::size_t>(B)), od(static_cast<std::size_t>(B));
            for (int i = 0; i < B; ++i) {
                nd[static_cast<std::size_t>(i)] = {dists[static_cast<std::size_t>(i)].mean,
                                                   dists[static_cast<std::size_t>(i)].std};
                od[static_cast<std::size_t>(i)] = {
                    batch.records[static_cast<std::size_t>(i)].mean_old,
                    batch.records[static_cast<std::size_t>(i)].std_old};
            }
            const PpoKlResult res =
                ppo_kl_loss(new_logprob, old_logprob, adv, nd, od, tc_.ppo.kl_coef);
            stats.clip_loss = res.objective;
            stats.kl = res.mean_kl;
            grad_logprob = res.grad_logprob;
        } else {  // vanilla policy gradient: E[log pi * A]
            grad_logprob = adv / static_cast<double>(B);
            stats.clip_loss = new_logprob.dot(adv) / B;
        }

        // Chain d(objective)/d(logprob) through the distribution into raw outputs.
        Mat upstream = Mat::Zero(actor_.output_dim(), B);
        for (int i = 0; i < B; ++i) {
            if (grad_logprob[i] == 0.0 && tc_.actor_update != ActorUpdate::PpoKl) continue;
            const auto& rec = batch.records[static_cast<std::size_t>(i)];
            const auto& dist = dists[static_cast<std::size_t>(i)];
            const LogprobGrads lg = logprob_grads(dist, rec.action);
            Vec dmean = grad_logprob[i] * lg.dmean;
            Vec dstd = grad_logprob[i] * lg.dstd;
            if (tc_.actor_update == ActorUpdate::PpoKl) {
                // - kl_coef * d KL(old || new) / d(new params), per record mean
                const auto& mo = rec.mean_old;
                const auto& so = rec.std_old;
                for (int d = 0; d < head_.dim; ++d) {
                    const double sn = dist.std[d];
                    const double dm = dist.mean[d] - mo[d];
                    dmean[d] += -tc_.ppo.kl_coef / B * (dm / (sn * sn));
                    dstd[d] += -tc_.ppo.kl_coef / B *
                               (1.0 / sn - (so[d] * so[d] + dm * dm) / (sn * sn * sn));
                }
            }
            upstream.col(i) = head_.backward(cache.output.col(i), dmean, dstd);
        }
        // Ascent: Adam minimizes, so feed the negated gradient.
        NetGrads grads = actor_.backward(cache, -upstream);
        AdamConfig ac;
        ac.lr = tc_.lr_actor;
        adam_actor_.step(actor_, grads, ac);
    }

    void primal_dual_update(const TrajectoryBatch& batch, UpdateStats& stats) {
        const int B = static_cast<int>(batch.size());

        // E[f1] per user over the batch, falling back to x where unobserved.
        Vec ef1 = Vec::Zero(scen_.K);
        Vec counts = Vec::Zero(scen_.K);
        double lr_mean = 0.0;
        for (const auto& rec : batch.records) {
            if (multi_worker_mode_) {
                ef1[rec.user] += rec.rates[rec.user];
                counts[rec.user] += 1.0;
            } else {
                ef1 += rec.rates;
                counts.array() += 1.0;
            }
            lr_mean += rec.l_r;
        }
        lr_mean /= B;
        for (int k = 0; k < scen_.K; ++k)
            ef1[k] = counts[k] > 0.0 ? ef1[k] / counts[k] : pd_.x[k];

        PdEstimates est;
        est.f2_val = radar_slack(lr_mean, scen_.ell);
        stats.f2 = est.f2_val;

        // Fixed probe draw order: x-hatated probes first, then the policy probe.
        const Vec probe_x1 = update_rng_.truncated_normal_vec(scen_.K, pd_.probe_trunc);
        const Vec probe_x2 = update_rng_.truncated_normal_vec(scen_.K, pd_.probe_trunc);

        const ScalarFn f0_fn = [](const Vec& x) { return x.sum(); };
        est.grad_f0 = zo_grad_with_probe(f0_fn, pd_.x, probe_x1, pd_.alpha1);

        const double f2_const = est.f2_val;  // the slack does not vary with x
        const VectorFn f2_fn = [f2_const](const Vec&) { return Vec::Constant(1, f2_const); };
        const Vec f2_diff = (f2_fn(pd_.x + pd_.alpha2 * probe_x2) - f2_fn(pd_.x)) / pd_.alpha2;
        est.jac_f2 = f2_diff * probe_x2.transpose();

        // Policy-space probe of grad_omega (lambda^T E[f1]).
        const int zb = std::min(B, tc_.zo_batch);
        const Vec omega_probe = update_rng_.truncated_normal_vec(
            static_cast<Eigen::Index>(actor_.param_count()), pd_.probe_trunc);
        DenseNet perturbed = actor_;
        perturbed.add_scaled(omega_probe, pd_.alpha3);
        double base = 0.0, pert = 0.0;
        for (int i = 0; i < zb; ++i) {
            const auto& rec = batch.records[static_cast<std::size_t>(i)];
            base += pd_.lambda.dot(policy_rates(rec.heff, actor_, rec.user));
            pert += pd_.lambda.dot(policy_rates(rec.heff, perturbed, rec.user));
        }
        est.grad_omega = ((pert - base) / (zb * pd_.alpha3)) * omega_probe;
        est.ef1 = ef1;

        const PdStepResult res = primal_dual_step(pd_, est);
        stats.pd_accepted = res.accepted;
        if (res.accepted && res.omega_delta.size() > 0)
            actor_.add_scaled(res.omega_delta, 1.0);
    }

    ScenarioConfig scen_;
    ChannelSynthConfig synth_;
    TrainConfig tc_;
    DenseNet actor_, critic_, critic_target_;
    AdamState adam_actor_, adam_critic_;
    ReplayMemory replay_;
    PrimalDualState pd_;
    Rng root_;
    Rng update_rng_;
    ActorHead head_;
    int action_dim_ = 0;
    long update_count_ = 0;
    long critic_updates_ = 0;
    int steps_since_update_ = 0;
    bool multi_worker_mode_ = false;
};

}  // namespace isac

#endif  // ISAC_TRAINER_HPP
