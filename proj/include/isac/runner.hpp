// SPDX-License-Identifier: Apache-2.0
//
// Experiment execution: drives the training loops and baselines from an
// ExperimentConfig, evaluates the trained policies, and emits the CSV
// artifacts plus a re-runnable manifest.
#ifndef ISAC_RUNNER_HPP
#define ISAC_RUNNER_HPP

#include "isac/experiment.hpp"

#include <memory>

namespace isac {

struct SeedRunResult {
    std::uint64_t seed = 0;
    std::shared_ptr<PrimalDualPpoTrainer> trainer;  // set for trainable algos
    std::vector<EpisodeLog> episodes;
    std::vector<UpdateStats> updates;
    std::vector<StepTrace> step_traces;
    CMat final_W;
    double final_capacity = 0.0;   // greedy deterministic policy after training
    double random_capacity = 0.0;  // frozen-policy random beamforming on the same channels
    std::vector<std::string> checkpoints;
};

struct ExperimentResult {
    ExperimentConfig cfg;
    std::vector<SeedRunResult> seeds;
    std::string config_hash;
    bool failed = false;
    std::string error;
};

// ---------------------------------------------------------------------------
// Baseline curves (no training)
// ---------------------------------------------------------------------------

inline SeedRunResult run_baseline_curve(const ExperimentConfig& cfg, std::uint64_t seed) {
    SeedRunResult out;
    out.seed = seed;
    Rng root(seed);
    Rng env_rng = root.derive(1, 0);
    Rng misc = root.derive(2, 0);
    Environment env(cfg.scenario, cfg.channel);
    for (long e = 0; e < cfg.train.episodes; ++e) {
        env.reset(env_rng);
        const CMat H = env.effective();
        CMat W;
        switch (cfg.algo) {
            case Algo::Zf: W = zf_beamforming(H, cfg.scenario).W; break;
            case Algo::Mrt: W = mrt_beamforming(H, cfg.scenario).W; break;
            case Algo::Wmmse:
                W = wmmse(H, cfg.scenario.P_max, cfg.scenario.sigma_c2, 30).state.W;
                break;
            default: {  // random beams
                W.resize(cfg.scenario.M, cfg.scenario.K);
                const double amp =
                    std::sqrt(cfg.scenario.P_max / (2.0 * cfg.scenario.M * cfg.scenario.K));
                for (Eigen::Index i = 0; i < W.size(); ++i)
                    W.data()[i] = amp * Complex(misc.normal(), misc.normal());
                break;
            }
        }
        W = power_projection(W, cfg.scenario).W;
        const RateResult rr = sum_rate_reward(H, W, cfg.scenario);
        EpisodeLog el;
        el.episode = e;
        el.mean_f0 = rr.f0;
        el.mean_reward = rr.f0;
        el.mean_lr = beampattern_mse(W * W.adjoint(), env.grid(), cfg.scenario);
        el.constraint_ok = el.mean_lr <= cfg.scenario.ell ? 1.0 : 0.0;
        el.x = Vec::Zero(cfg.scenario.K);
        el.lambda = Vec::Zero(cfg.scenario.K);
        el.f2 = cfg.scenario.ell - el.mean_lr;
        out.episodes.push_back(std::move(el));
        out.final_W = W;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Asynchronous actor-critic baseline (beams learned, phases random)
// ---------------------------------------------------------------------------

inline SeedRunResult run_training_a3c(const ExperimentConfig& cfg, std::uint64_t seed) {
    SeedRunResult out;
    out.seed = seed;
    const ScenarioConfig& scen = cfg.scenario;
    const int workers = std::max(1, scen.K);

    ScenarioConfig worker_scen = scen;
    worker_scen.K = 1;

    Rng init(Rng(seed).derive(0, 0));
    const int obs_dim = 2 * scen.M * scen.R;
    const int act_dim = 2 * scen.M * scen.R;
    A3cGlobal global;
    global.actor = DenseNet({obs_dim, cfg.train.actor_hidden, 2 * act_dim}, Activation::ReLU,
                            Activation::Identity, init);
    global.critic = DenseNet({obs_dim, cfg.train.critic_hidden, 1}, Activation::ReLU,
                             Activation::Identity, init);
    const ActorHead head =
        ActorHead::make(act_dim, std::sqrt(scen.P_max / scen.M), cfg.train.std_init_frac,
                        cfg.train.min_std_frac);

    std::mutex log_mutex;
    std::vector<std::vector<double>> worker_f0(static_cast<std::size_t>(workers));
    std::vector<std::vector<double>> worker_lr(static_cast<std::size_t>(workers));

    auto worker_fn = [&](int w) {
        Rng root(seed);
        Rng env_rng = root.derive(1, static_cast<std::uint64_t>(w));
        Rng act_rng = root.derive(2, static_cast<std::uint64_t>(w));
        Environment env(worker_scen, cfg.channel);
        DenseNet actor_local, critic_local;
        for (long e = 0; e < cfg.train.episodes; ++e) {
            env.reset(env_rng);
            double acc_f0 = 0.0, acc_lr = 0.0;
            for (int t = 0; t < cfg.train.steps_per_episode; ++t) {
                {
                    std::lock_guard<std::mutex> lk(global.apply_mutex);
                    actor_local = global.actor;
                    critic_local = global.critic;
                }
                const Vec obs = flatten_cmat(env.effective_user(0));
                const TruncGaussHead dist = head.apply(actor_local.forward(obs));
                const SampleResult s = sample_and_logprob(dist, act_rng);
                IndexVec idx(static_cast<std::size_t>(scen.N));
                for (auto& i : idx) i = act_rng.uniform_int(scen.phase_levels());
                const StepResult res =
                    env.step_full(action_to_beam(s.action, scen.M, scen.R), idx);
                acc_f0 += res.reward;
                acc_lr += res.l_r;
                const A3cGrads grads =
                    a3c_local_grads(actor_local, critic_local, head, obs, s.action, res.reward);
                a3c_update(global, grads, cfg.train.lr_actor, cfg.train.lr_critic);
            }
            std::lock_guard<std::mutex> lk(log_mutex);
            worker_f0[static_cast<std::size_t>(w)].push_back(acc_f0 / cfg.train.steps_per_episode);
            worker_lr[static_cast<std::size_t>(w)].push_back(acc_lr / cfg.train.steps_per_episode);
        }
    };

    std::vector<std::thread> threads;
    for (int w = 0; w < workers; ++w) threads.emplace_back(worker_fn, w);
    for (auto& t : threads) t.join();

    for (long e = 0; e < cfg.train.episodes; ++e) {
        EpisodeLog el;
        el.episode = e;
        int n = 0;
        for (int w = 0; w < workers; ++w) {
            if (e < static_cast<long>(worker_f0[static_cast<std::size_t>(w)].size())) {
                el.mean_f0 += worker_f0[static_cast<std::size_t>(w)][static_cast<std::size_t>(e)];
                el.mean_lr += worker_lr[static_cast<std::size_t>(w)][static_cast<std::size_t>(e)];
                ++n;
            }
        }
        if (n) {
            el.mean_f0 /= n;
            el.mean_lr /= n;
        }
        el.mean_reward = el.mean_f0;
        el.constraint_ok = el.mean_lr <= scen.ell ? 1.0 : 0.0;
        el.x = Vec::Zero(scen.K);
        el.lambda = Vec::Zero(scen.K);
        el.f2 = scen.ell - el.mean_lr;
        out.episodes.push_back(std::move(el));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation sweeps
// ---------------------------------------------------------------------------

// Capacity under uniformly rescaled beams on fixed eval channels; monotone in
// the scale because the beam directions stay fixed.
inline std::vector<std::pair<double, double>> capacity_vs_power(
    const PrimalDualPpoTrainer& trainer, const ExperimentConfig& cfg, std::uint64_t eval_seed) {
    std::vector<std::pair<double, double>> rows;
    const double base = cfg.scenario.P_max;
    for (double dbm : cfg.power_sweep_dbm) {
        const double p_lin = std::pow(10.0, dbm / 10.0);
        const double scale = std::sqrt(p_lin / base);
        Rng env_rng = Rng(eval_seed).derive(7, 0);
        CollectContext ctx(cfg.scenario, cfg.channel, env_rng, env_rng.derive(9, 4), 0);
        double acc = 0.0;
        long n = 0;
        for (int e = 0; e < cfg.eval_episodes; ++e) {
            ctx.begin_episode();
            for (int t = 0; t < 10; ++t) {
                for (int k = 0; k < cfg.scenario.K; ++k) {
                    const CMat heff = ctx.env.effective();
                    const Vec obs = flatten_cmat(CMat(heff.row(k)));
                    const TruncGaussHead dist = trainer.head().apply(trainer.actor().forward(obs));
                    const Mat q = CriticView::q_values(trainer.critic().forward(obs),
                                                       cfg.scenario.N, cfg.scenario.phase_levels());
                    ctx.env.step(k, action_to_beam(dist.mean, cfg.scenario.M, 1).col(0),
                                 greedy_phase(q));
                    const RateResult rr = sum_rate_reward(ctx.env.effective(),
                                                          CMat(scale * ctx.env.beams()),
                                                          cfg.scenario);
                    acc += rr.f0;
                    ++n;
                }
            }
        }
        rows.push_back({dbm, acc / std::max<long>(1, n)});
    }
    return rows;
}

// Capacity versus element count under the trained actor's beams and
// best-of-S random phase draws; the no-surface column is flat by construction.
inline std::vector<std::tuple<int, double, double>> capacity_vs_elements(
    const PrimalDualPpoTrainer& trainer, const ExperimentConfig& cfg, std::uint64_t eval_seed) {
    std::vector<std::tuple<int, double, double>> rows;
    const int S = 16;
    for (int n_el : cfg.elements_sweep) {
        const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n_el))));
        const int n_sq = side * side;  // keep the perfect-square invariant
        double cap[2] = {0.0, 0.0};
        for (int variant = 0; variant < 2; ++variant) {
            ScenarioConfig scen = cfg.scenario;
            scen.N = n_sq;
            ChannelSynthConfig synth = cfg.channel;
            synth.disable_irs = variant == 1;
            Rng env_rng = Rng(eval_seed).derive(8, static_cast<std::uint64_t>(n_sq));
            Rng phase_rng = Rng(eval_seed).derive(8, 1000 + static_cast<std::uint64_t>(n_sq));
            Environment env(scen, synth);
            double acc = 0.0;
            long cnt = 0;
            for (int e = 0; e < cfg.eval_episodes; ++e) {
                env.reset(env_rng);
                double best = -1.0;
                for (int s = 0; s < S; ++s) {
                    IndexVec idx(static_cast<std::size_t>(n_sq));
                    for (auto& i : idx) i = phase_rng.uniform_int(scen.phase_levels());
                    env.set_phases(phase_matrix(idx, scen));
                    const CMat heff = env.effective();
                    CMat W(scen.M, scen.K);
                    for (int k = 0; k < scen.K; ++k) {
                        const Vec obs = flatten_cmat(CMat(heff.row(k)));
                        const TruncGaussHead dist =
                            trainer.head().apply(trainer.actor().forward(obs));
                        W.col(k) = action_to_beam(dist.mean, scen.M, 1).col(0);
                    }
                    W = power_projection(W, scen).W;
                    best = std::max(best, sum_rate_reward(heff, W, scen).f0);
                }
                acc += best;
                ++cnt;
            }
            cap[variant] = acc / std::max<long>(1, cnt);
        }
        rows.push_back({n_sq, cap[0], cap[1]});
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

inline SeedRunResult run_one_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
    switch (cfg.algo) {
        case Algo::Zf:
        case Algo::Mrt:
        case Algo::Wmmse:
        case Algo::Random:
            return run_baseline_curve(cfg, seed);
        case Algo::A3c:
            return run_training_a3c(cfg, seed);
        default:
            break;
    }

    TrainConfig tc = cfg.train;
    if (cfg.algo == Algo::A2cPd) tc.actor_update = ActorUpdate::PolicyGradient;
    auto trainer_ptr = std::make_shared<PrimalDualPpoTrainer>(cfg.scenario, cfg.channel, tc, seed);
    PrimalDualPpoTrainer& trainer = *trainer_ptr;

    SeedRunResult out;
    out.seed = seed;
    out.trainer = trainer_ptr;
    if (cfg.algo == Algo::DppoPd) {
        const long transitions =
            static_cast<long>(cfg.train.episodes) * cfg.train.steps_per_episode;
        const long generations = std::max<long>(1, transitions / cfg.dppo.horizon);
        DppoConfig dcfg = cfg.dppo;
        if (cfg.deterministic) dcfg.deterministic = true;
        const DppoLog log = run_training_dppo(trainer, dcfg, generations, cfg.checkpoint_every);
        out.episodes = log.episodes;
        out.updates = log.updates;
        out.checkpoints = log.checkpoints;
    } else {
        std::vector<StepTrace>* traces = cfg.log_steps ? &out.step_traces : nullptr;
        StepObserver observer;
        if (traces)
            observer = [traces](const StepTrace& t) {
                StepTrace copy = t;
                copy.q_values.resize(0, 0);  // keep the per-step log light
                traces->push_back(std::move(copy));
            };
        TrainingLog log = trainer.train(observer);
        out.episodes = std::move(log.episodes);
        out.updates = std::move(log.updates);
        out.final_W = log.final_W;
    }

    if (cfg.scenario.R == 1 && !trainer.multi_worker_mode()) {
        out.final_capacity = trainer.greedy_capacity(cfg.eval_episodes, 10, Rng(seed).derive(6, 0));
        out.random_capacity = trainer.random_capacity(cfg.eval_episodes, 10, Rng(seed).derive(6, 0));
        if (out.final_W.size() == 0) out.final_W = CMat::Zero(cfg.scenario.M, cfg.scenario.K);
    }
    return out;
}

namespace detail {

inline std::string manifest_line(const std::string& hash, std::uint64_t seed) {
    return "# manifest config_hash=" + hash + " seed=" + std::to_string(seed);
}

}  // namespace detail

inline ExperimentResult run_experiment(const ExperimentConfig& cfg_in) {
    ExperimentConfig cfg = cfg_in;
    cfg.validate();
    ExperimentResult result;
    result.cfg = cfg;
    const std::string echo = config_echo(cfg);
    {
        char buf[20];
        std::snprintf(buf, sizeof(buf), "%016llx",
                      static_cast<unsigned long long>(fnv1a(echo)));
        result.config_hash = buf;
    }

    namespace fs = std::filesystem;
    const fs::path out_dir(cfg.out_dir);
    fs::create_directories(out_dir);
    {
        std::ofstream f(out_dir / "config_echo.ini", std::ios::binary);
        f << echo;
    }

    auto write_manifest = [&](const std::string& status, const std::string& error) {
        std::ofstream f(out_dir / "manifest.txt", std::ios::binary);
        f << "config_hash=" << result.config_hash << '\n';
        f << "algo=" << algo_name(cfg.algo) << '\n';
        f << "preset=" << cfg.preset << '\n';
        f << "seeds=";
        for (std::size_t i = 0; i < cfg.seeds.size(); ++i) f << (i ? "," : "") << cfg.seeds[i];
        f << '\n';
        f << "status=" << status << '\n';
        if (!error.empty()) f << "error=" << error << '\n';
        f << "rerun=bench_cli --config config_echo.ini\n";
        for (const auto& s : result.seeds)
            f << "seed_" << s.seed << "_final_capacity=" << format_double(s.final_capacity)
              << '\n';
    };
    write_manifest("running", "");

    try {
        for (std::uint64_t seed : cfg.seeds) {
            SeedRunResult res = run_one_seed(cfg, seed);

            const fs::path seed_dir = out_dir / ("seed_" + std::to_string(seed));
            fs::create_directories(seed_dir);
            const std::string mline = detail::manifest_line(result.config_hash, seed);

            {  // reward_curve.csv: episode, raw, moving_avg
                CsvWriter w((seed_dir / "reward_curve.csv").string());
                w.stream() << mline << '\n';
                w.row({"episode", "reward", "moving_avg"});
                std::vector<double> raw;
                for (const auto& el : res.episodes) raw.push_back(el.mean_f0);
                if (!raw.empty()) {
                    const auto ma = emit_moving_average(raw, cfg.moving_avg_window);
                    for (std::size_t i = 0; i < raw.size(); ++i)
                        w.row({std::to_string(i), format_double(raw[i]), format_double(ma[i])});
                }
            }
            {  // constraint.csv: episode, l_r, ell, satisfied
                CsvWriter w((seed_dir / "constraint.csv").string());
                w.stream() << mline << '\n';
                w.row({"episode", "l_r", "ell", "satisfied"});
                for (const auto& el : res.episodes)
                    w.row({std::to_string(el.episode), format_double(el.mean_lr),
                           format_double(cfg.scenario.ell),
                           el.mean_lr <= cfg.scenario.ell ? "1" : "0"});
            }
            {  // multipliers.csv: episode, x..., lambda..., mu, f2
                CsvWriter w((seed_dir / "multipliers.csv").string());
                w.stream() << mline << '\n';
                std::vector<std::string> hdr = {"episode"};
                for (int k = 0; k < cfg.scenario.K; ++k) hdr.push_back("x_" + std::to_string(k));
                for (int k = 0; k < cfg.scenario.K; ++k)
                    hdr.push_back("lambda_" + std::to_string(k));
                hdr.push_back("mu");
                hdr.push_back("f2");
                w.row(hdr);
                for (const auto& el : res.episodes) {
                    std::vector<std::string> row = {std::to_string(el.episode)};
                    for (int k = 0; k < cfg.scenario.K; ++k)
                        row.push_back(format_double(el.x.size() > k ? el.x[k] : 0.0));
                    for (int k = 0; k < cfg.scenario.K; ++k)
                        row.push_back(format_double(el.lambda.size() > k ? el.lambda[k] : 0.0));
                    row.push_back(format_double(el.mu));
                    row.push_back(format_double(el.f2));
                    w.row(row);
                }
            }
            {  // metrics.csv: update_idx, clip_loss, value_loss, q_loss, mean_ratio, kl
                CsvWriter w((seed_dir / "metrics.csv").string());
                w.stream() << mline << '\n';
                w.row({"update_idx", "clip_loss", "value_loss", "q_loss", "mean_ratio", "kl"});
                for (const auto& u : res.updates)
                    w.row({std::to_string(u.update_idx), format_double(u.clip_loss),
                           format_double(u.value_loss), format_double(u.q_loss),
                           format_double(u.mean_ratio), format_double(u.kl)});
            }
            if (cfg.log_steps && !res.step_traces.empty()) {
                // episode_steps.csv: episode, step, reward, l_r, constraint_ok
                CsvWriter w((seed_dir / "episode_steps.csv").string());
                w.stream() << mline << '\n';
                w.row({"episode", "step", "reward", "l_r", "constraint_ok"});
                for (const auto& t : res.step_traces)
                    w.row({std::to_string(t.episode), std::to_string(t.step),
                           format_double(t.f0), format_double(t.l_r),
                           t.l_r <= cfg.scenario.ell ? "1" : "0"});
            }
            if (res.final_W.size() > 0) {
                // beampattern.csv: angle_deg, power
                const BeamGrid grid = BeamGrid::build(cfg.scenario);
                const Vec P = beam_pattern(res.final_W * res.final_W.adjoint(), grid);
                CsvWriter w((seed_dir / "beampattern.csv").string());
                w.stream() << mline << '\n';
                w.row({"angle_deg", "power"});
                for (std::size_t l = 0; l < grid.psi.size(); ++l)
                    w.row({format_double(rad2deg(grid.psi[l])),
                           format_double(P[static_cast<Eigen::Index>(l)])});
            }
            if (res.trainer && cfg.scenario.R == 1 && !res.trainer->multi_worker_mode()) {
                {  // capacity_vs_power.csv: p_max_dbm, capacity
                    const auto rows = capacity_vs_power(*res.trainer, cfg, seed);
                    CsvWriter w((seed_dir / "capacity_vs_power.csv").string());
                    w.stream() << mline << '\n';
                    w.row({"p_max_dbm", "capacity"});
                    for (const auto& [dbm, cap] : rows)
                        w.row({format_double(dbm), format_double(cap)});
                }
                {  // capacity_vs_elements.csv: n_elements, capacity, capacity_no_irs
                    const auto rows = capacity_vs_elements(*res.trainer, cfg, seed);
                    CsvWriter w((seed_dir / "capacity_vs_elements.csv").string());
                    w.stream() << mline << '\n';
                    w.row({"n_elements", "capacity", "capacity_no_irs"});
                    for (const auto& [n_el, cap, cap0] : rows)
                        w.row({std::to_string(n_el), format_double(cap), format_double(cap0)});
                }
            }
            if (!res.checkpoints.empty()) {
                for (std::size_t c = 0; c < res.checkpoints.size(); ++c) {
                    std::ofstream f(seed_dir / ("checkpoint_gen" + std::to_string(c) + ".csv"),
                                    std::ios::binary);
                    f << res.checkpoints[c];
                }
            }
            result.seeds.push_back(std::move(res));
        }
    } catch (const std::exception& e) {
        result.failed = true;
        result.error = e.what();
        write_manifest("failed", e.what());
        return result;
    }
    write_manifest("ok", "");
    return result;
}

}  // namespace isac

#endif  // ISAC_RUNNER_HPP
