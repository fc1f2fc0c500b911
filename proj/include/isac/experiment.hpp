// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration, presets, orchestration, and artifact emission.
// Configs are flat key-value text with [section] headers; unknown keys are
// hard errors. Runs emit plot-ready CSVs plus a manifest that reproduces the
// run byte-for-byte in deterministic mode.
#ifndef ISAC_EXPERIMENT_HPP
#define ISAC_EXPERIMENT_HPP

#include "isac/baselines.hpp"
#include "isac/dppo.hpp"

#include <filesystem>
#include <map>
#include <thread>

namespace isac {

enum class Algo { PpoPd, DppoPd, A2cPd, A3c, Zf, Mrt, Wmmse, Random };

inline const char* algo_name(Algo a) {
    switch (a) {
        case Algo::PpoPd: return "ppo_pd";
        case Algo::DppoPd: return "dppo_pd";
        case Algo::A2cPd: return "a2c_pd";
        case Algo::A3c: return "a3c";
        case Algo::Zf: return "zf";
        case Algo::Mrt: return "mrt";
        case Algo::Wmmse: return "wmmse";
        case Algo::Random: return "random";
    }
    return "?";
}

inline Algo algo_from_name(const std::string& s) {
    if (s == "ppo_pd") return Algo::PpoPd;
    if (s == "dppo_pd") return Algo::DppoPd;
    if (s == "a2c_pd") return Algo::A2cPd;
    if (s == "a3c") return Algo::A3c;
    if (s == "zf") return Algo::Zf;
    if (s == "mrt") return Algo::Mrt;
    if (s == "wmmse") return Algo::Wmmse;
    if (s == "random") return Algo::Random;
    throw ConfigError("unknown algo '" + s + "'");
}

struct ExperimentConfig {
    ScenarioConfig scenario;
    ChannelSynthConfig channel;
    TrainConfig train;
    DppoConfig dppo;
    Algo algo = Algo::PpoPd;
    std::vector<std::uint64_t> seeds = {1};
    std::string out_dir = "out";
    std::string preset = "functional";
    int moving_avg_window = 50;
    std::vector<double> power_sweep_dbm = {10.0, 20.0, 30.0};
    std::vector<int> elements_sweep = {4, 16, 36, 64};
    bool log_steps = true;
    int checkpoint_every = 0;
    int eval_episodes = 8;
    bool deterministic = true;

    ExperimentConfig() {
        // Functional defaults: the corrected return convention and analytic
        // x-update are what make the training loop behave; the printed forms
        // stay available through module-level flags.
        train.ppo.convention = ReturnConvention::Corrected;
        train.x_variant = XUpdateVariant::Analytic;
    }

    void validate() const {
        scenario.validate();
        train.ppo.validate();
        if (train.episodes < 1) throw ConfigError("episodes must be >= 1");
        if (seeds.empty()) throw ConfigError("seeds must be nonempty");
        if (moving_avg_window < 1) throw ConfigError("moving_avg_window must be >= 1");
    }
};

// The simulation-faithful preset: 0.55 THz carrier, the published absorption
// coefficient, targets at -40/0/40 degrees, 5-degree beams, max-normalized
// pattern error.
inline void apply_preset(ExperimentConfig& cfg, const std::string& name) {
    cfg.preset = name;
    if (name == "paper-sim") {
        cfg.channel.prop.f = 0.55e12;
        cfg.channel.prop.k_abs = 6.7141e-4;
        cfg.scenario.target_angles = {deg2rad(-40.0), deg2rad(0.0), deg2rad(40.0)};
        cfg.scenario.Delta = deg2rad(5.0);
        cfg.scenario.normalize_pattern = true;
    } else if (name == "functional") {
        cfg.scenario.Delta = deg2rad(10.0);
        cfg.scenario.normalize_pattern = false;
    } else {
        throw ConfigError("unknown preset '" + name + "'");
    }
}

// ---------------------------------------------------------------------------
// Config file parsing
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& v, int line) {
    std::size_t pos = 0;
    double d;
    try {
        d = std::stod(v, &pos);
    } catch (const std::exception&) {
        throw ConfigError("bad number '" + v + "' (line " + std::to_string(line) + ")");
    }
    if (pos != v.size())
        throw ConfigError("bad number '" + v + "' (line " + std::to_string(line) + ")");
    return d;
}

inline int parse_int(const std::string& v, int line) {
    const double d = parse_double(v, line);
    return static_cast<int>(std::llround(d));
}

inline bool parse_bool(const std::string& v, int line) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("bad bool '" + v + "' (line " + std::to_string(line) + ")");
}

inline std::vector<std::string> split(const std::string& v, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(v);
    while (std::getline(ss, cur, sep)) out.push_back(trim(cur));
    return out;
}

inline std::vector<double> parse_doubles(const std::string& v, int line) {
    std::vector<double> out;
    for (const auto& part : split(v, ',')) out.push_back(parse_double(part, line));
    return out;
}

}  // namespace detail

inline void apply_config_kv(ExperimentConfig& cfg, const std::string& section,
                            const std::string& key, const std::string& value, int line) {
    using detail::parse_bool;
    using detail::parse_double;
    using detail::parse_doubles;
    using detail::parse_int;
    auto unknown = [&]() {
        throw ConfigError("unknown key '" + key + "' in section [" + section + "] (line " +
                          std::to_string(line) + ")");
    };

    if (section == "scenario") {
        if (key == "m") cfg.scenario.M = parse_int(value, line);
        else if (key == "k") cfg.scenario.K = parse_int(value, line);
        else if (key == "n") cfg.scenario.N = parse_int(value, line);
        else if (key == "r") cfg.scenario.R = parse_int(value, line);
        else if (key == "b") cfg.scenario.b = parse_int(value, line);
        else if (key == "p_max") cfg.scenario.P_max = parse_double(value, line);
        else if (key == "sigma_c2") cfg.scenario.sigma_c2 = parse_double(value, line);
        else if (key == "ell") cfg.scenario.ell = parse_double(value, line);
        else if (key == "delta_deg") cfg.scenario.Delta = deg2rad(parse_double(value, line));
        else if (key == "grid_res_deg") cfg.scenario.grid_res = deg2rad(parse_double(value, line));
        else if (key == "targets_deg") {
            cfg.scenario.target_angles.clear();
            for (double d : parse_doubles(value, line))
                cfg.scenario.target_angles.push_back(deg2rad(d));
        } else if (key == "normalize_pattern") cfg.scenario.normalize_pattern = parse_bool(value, line);
        else if (key == "rate_log2") cfg.scenario.rate_log2 = parse_bool(value, line);
        else if (key == "gamma_min") cfg.scenario.gamma_min = parse_double(value, line);
        else if (key == "phi_shift") cfg.scenario.phi_shift = parse_double(value, line);
        else if (key == "eps_exp") cfg.scenario.eps_exp = parse_double(value, line);
        else if (key == "d_over_lambda") {
            cfg.scenario.d_over_lambda = parse_double(value, line);
            cfg.channel.prop.d_over_lambda = cfg.scenario.d_over_lambda;
        } else unknown();
    } else if (section == "channel") {
        if (key == "freq") cfg.channel.prop.f = parse_double(value, line);
        else if (key == "k_abs") cfg.channel.prop.k_abs = parse_double(value, line);
        else if (key == "rician_k") cfg.channel.prop.rician_K = parse_double(value, line);
        else if (key == "n_nl") cfg.channel.prop.n_NL = parse_int(value, line);
        else if (key == "g_t") cfg.channel.prop.G_t = parse_double(value, line);
        else if (key == "g_r") cfg.channel.prop.G_r = parse_double(value, line);
        else if (key == "impedance") cfg.channel.prop.Z = parse_double(value, line);
        else if (key == "roughness") cfg.channel.prop.sigma_rough = parse_double(value, line);
        else if (key == "phi_in") cfg.channel.prop.phi_in = parse_double(value, line);
        else if (key == "dist_bs_user") cfg.channel.dist_bs_user = parse_double(value, line);
        else if (key == "dist_bs_irs") cfg.channel.dist_bs_irs = parse_double(value, line);
        else if (key == "dist_irs_user") cfg.channel.dist_irs_user = parse_double(value, line);
        else if (key == "normalize") cfg.channel.normalize = parse_bool(value, line);
        else if (key == "disable_irs") cfg.channel.disable_irs = parse_bool(value, line);
        else unknown();
    } else if (section == "train") {
        if (key == "episodes") cfg.train.episodes = parse_int(value, line);
        else if (key == "steps_per_episode") cfg.train.steps_per_episode = parse_int(value, line);
        else if (key == "lr_actor") cfg.train.lr_actor = parse_double(value, line);
        else if (key == "lr_critic") cfg.train.lr_critic = parse_double(value, line);
        else if (key == "gamma") cfg.train.ppo.gamma = parse_double(value, line);
        else if (key == "clip_eps") cfg.train.ppo.clip_eps = parse_double(value, line);
        else if (key == "paper_literal_clip") {
            if (parse_bool(value, line)) cfg.train.ppo.clip_eps = 2.0;
        } else if (key == "kl_coef") cfg.train.ppo.kl_coef = parse_double(value, line);
        else if (key == "ppo_mode") {
            if (value == "clip") cfg.train.ppo.mode = PpoMode::Clip;
            else if (value == "klpen") cfg.train.ppo.mode = PpoMode::KlPenalty;
            else throw ConfigError("ppo_mode must be clip or klpen (line " + std::to_string(line) + ")");
            cfg.train.actor_update = cfg.train.ppo.mode == PpoMode::Clip ? ActorUpdate::PpoClip
                                                                         : ActorUpdate::PpoKl;
        } else if (key == "epsilon_greedy") cfg.train.ppo.epsilon_greedy = parse_double(value, line);
        else if (key == "epsilon_literal") cfg.train.ppo.epsilon_literal = parse_bool(value, line);
        else if (key == "batch_size") cfg.train.ppo.batch_size = parse_int(value, line);
        else if (key == "epochs_per_update") cfg.train.ppo.epochs_per_update = parse_int(value, line);
        else if (key == "replay_capacity") cfg.train.ppo.replay_capacity = parse_int(value, line);
        else if (key == "target_sync_every") cfg.train.ppo.target_sync_every = parse_int(value, line);
        else if (key == "normalize_advantages")
            cfg.train.ppo.normalize_advantages = parse_bool(value, line);
        else if (key == "convention") {
            if (value == "printed") cfg.train.ppo.convention = ReturnConvention::Printed;
            else if (value == "corrected") cfg.train.ppo.convention = ReturnConvention::Corrected;
            else throw ConfigError("convention must be printed or corrected (line " +
                                   std::to_string(line) + ")");
        } else if (key == "x_variant") {
            if (value == "printed") cfg.train.x_variant = XUpdateVariant::Printed;
            else if (value == "analytic") cfg.train.x_variant = XUpdateVariant::Analytic;
            else throw ConfigError("x_variant must be printed or analytic (line " +
                                   std::to_string(line) + ")");
        } else if (key == "tau") cfg.train.tau = parse_double(value, line);
        else if (key == "alpha") cfg.train.alpha = parse_double(value, line);
        else if (key == "constraint_in_reward")
            cfg.train.constraint_in_reward = parse_bool(value, line);
        else if (key == "update_every") cfg.train.update_every = parse_int(value, line);
        else if (key == "actor_hidden") cfg.train.actor_hidden = parse_int(value, line);
        else if (key == "critic_hidden") cfg.train.critic_hidden = parse_int(value, line);
        else if (key == "lstep") cfg.train.ppo.lstep = parse_int(value, line);
        else unknown();
    } else if (section == "dppo") {
        if (key == "workers") cfg.dppo.workers = parse_int(value, line);
        else if (key == "horizon") cfg.dppo.horizon = parse_int(value, line);
        else if (key == "quorum") cfg.dppo.quorum = parse_int(value, line);
        else if (key == "deterministic") cfg.dppo.deterministic = parse_bool(value, line);
        else unknown();
    } else if (section == "experiment") {
        if (key == "algo") cfg.algo = algo_from_name(value);
        else if (key == "seeds") {
            cfg.seeds.clear();
            for (double d : parse_doubles(value, line))
                cfg.seeds.push_back(static_cast<std::uint64_t>(d));
        } else if (key == "out_dir") cfg.out_dir = value;
        else if (key == "preset") apply_preset(cfg, value);
        else if (key == "moving_avg_window") cfg.moving_avg_window = parse_int(value, line);
        else if (key == "power_sweep_dbm") cfg.power_sweep_dbm = parse_doubles(value, line);
        else if (key == "elements_sweep") {
            cfg.elements_sweep.clear();
            for (double d : parse_doubles(value, line))
                cfg.elements_sweep.push_back(static_cast<int>(d));
        } else if (key == "log_steps") cfg.log_steps = parse_bool(value, line);
        else if (key == "checkpoint_every") cfg.checkpoint_every = parse_int(value, line);
        else if (key == "eval_episodes") cfg.eval_episodes = parse_int(value, line);
        else if (key == "deterministic") cfg.deterministic = parse_bool(value, line);
        else unknown();
    } else {
        throw ConfigError("unknown section [" + section + "] (line " + std::to_string(line) + ")");
    }
}

inline ExperimentConfig load_config_stream(std::istream& in) {
    ExperimentConfig cfg;
    std::string section = "experiment";
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string s = detail::trim(raw);
        if (s.empty() || s[0] == '#' || s[0] == ';') continue;
        if (s.front() == '[' && s.back() == ']') {
            section = detail::trim(s.substr(1, s.size() - 2));
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected key = value (line " + std::to_string(line) + ")");
        const std::string key = detail::trim(s.substr(0, eq));
        const std::string value = detail::trim(s.substr(eq + 1));
        apply_config_kv(cfg, section, key, value, line);
    }
    cfg.validate();
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config file not found: " + path);
    return load_config_stream(f);
}

// Re-runnable echo of the full config in the same key-value format.
inline std::string config_echo(const ExperimentConfig& cfg) {
    std::ostringstream ss;
    auto d = [](double v) { return format_double(v); };
    ss << "[scenario]\n";
    ss << "m = " << cfg.scenario.M << "\nk = " << cfg.scenario.K << "\nn = " << cfg.scenario.N
       << "\nr = " << cfg.scenario.R << "\nb = " << cfg.scenario.b << '\n';
    ss << "p_max = " << d(cfg.scenario.P_max) << "\nsigma_c2 = " << d(cfg.scenario.sigma_c2)
       << "\nell = " << d(cfg.scenario.ell) << '\n';
    ss << "delta_deg = " << d(rad2deg(cfg.scenario.Delta)) << "\ngrid_res_deg = "
       << d(rad2deg(cfg.scenario.grid_res)) << '\n';
    ss << "targets_deg = ";
    for (std::size_t i = 0; i < cfg.scenario.target_angles.size(); ++i)
        ss << (i ? "," : "") << d(rad2deg(cfg.scenario.target_angles[i]));
    ss << '\n';
    ss << "normalize_pattern = " << (cfg.scenario.normalize_pattern ? "true" : "false") << '\n';
    ss << "rate_log2 = " << (cfg.scenario.rate_log2 ? "true" : "false") << '\n';
    ss << "gamma_min = " << d(cfg.scenario.gamma_min) << "\nphi_shift = " << d(cfg.scenario.phi_shift)
       << "\neps_exp = " << d(cfg.scenario.eps_exp) << '\n';
    ss << "d_over_lambda = " << d(cfg.scenario.d_over_lambda) << '\n';
    ss << "[channel]\n";
    ss << "freq = " << d(cfg.channel.prop.f) << "\nk_abs = " << d(cfg.channel.prop.k_abs) << '\n';
    ss << "rician_k = " << d(cfg.channel.prop.rician_K) << "\nn_nl = " << cfg.channel.prop.n_NL << '\n';
    ss << "impedance = " << d(cfg.channel.prop.Z) << "\nroughness = "
       << d(cfg.channel.prop.sigma_rough) << "\nphi_in = " << d(cfg.channel.prop.phi_in) << '\n';
    ss << "dist_bs_user = " << d(cfg.channel.dist_bs_user) << "\ndist_bs_irs = "
       << d(cfg.channel.dist_bs_irs) << "\ndist_irs_user = " << d(cfg.channel.dist_irs_user) << '\n';
    ss << "normalize = " << (cfg.channel.normalize ? "true" : "false") << '\n';
    ss << "disable_irs = " << (cfg.channel.disable_irs ? "true" : "false") << '\n';
    ss << "[train]\n";
    ss << "episodes = " << cfg.train.episodes << "\nsteps_per_episode = "
       << cfg.train.steps_per_episode << '\n';
    ss << "lr_actor = " << d(cfg.train.lr_actor) << "\nlr_critic = " << d(cfg.train.lr_critic) << '\n';
    ss << "gamma = " << d(cfg.train.ppo.gamma) << "\nclip_eps = " << d(cfg.train.ppo.clip_eps) << '\n';
    ss << "epsilon_greedy = " << d(cfg.train.ppo.epsilon_greedy) << "\nepsilon_literal = "
       << (cfg.train.ppo.epsilon_literal ? "true" : "false") << '\n';
    ss << "batch_size = " << cfg.train.ppo.batch_size << "\nlstep = " << cfg.train.ppo.lstep << '\n';
    ss << "convention = "
       << (cfg.train.ppo.convention == ReturnConvention::Printed ? "printed" : "corrected") << '\n';
    ss << "x_variant = "
       << (cfg.train.x_variant == XUpdateVariant::Printed ? "printed" : "analytic") << '\n';
    ss << "tau = " << d(cfg.train.tau) << "\nalpha = " << d(cfg.train.alpha) << '\n';
    ss << "constraint_in_reward = " << (cfg.train.constraint_in_reward ? "true" : "false") << '\n';
    ss << "update_every = " << cfg.train.update_every << '\n';
    ss << "normalize_advantages = " << (cfg.train.ppo.normalize_advantages ? "true" : "false")
       << '\n';
    ss << "[dppo]\n";
    ss << "workers = " << cfg.dppo.workers << "\nhorizon = " << cfg.dppo.horizon << "\nquorum = "
       << cfg.dppo.quorum << '\n';
    ss << "deterministic = " << (cfg.dppo.deterministic ? "true" : "false") << '\n';
    ss << "[experiment]\n";
    ss << "algo = " << algo_name(cfg.algo) << '\n';
    ss << "seeds = ";
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) ss << (i ? "," : "") << cfg.seeds[i];
    ss << '\n';
    ss << "moving_avg_window = " << cfg.moving_avg_window << '\n';
    ss << "log_steps = " << (cfg.log_steps ? "true" : "false") << '\n';
    ss << "checkpoint_every = " << cfg.checkpoint_every << '\n';
    ss << "eval_episodes = " << cfg.eval_episodes << '\n';
    ss << "deterministic = " << (cfg.deterministic ? "true" : "false") << '\n';
    return ss.str();
}

// ---------------------------------------------------------------------------
// Moving average
// ---------------------------------------------------------------------------

// Trailing-window mean; the prefix averages over the points available.
inline std::vector<double> emit_moving_average(const std::vector<double>& series, int window) {
    if (series.empty()) throw DimensionError("emit_moving_average: empty series");
    require(window >= 1, "emit_moving_average: window must be >= 1");
    std::vector<double> out(series.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < series.size(); ++i) {
        acc += series[i];
        if (i >= static_cast<std::size_t>(window)) acc -= series[i - static_cast<std::size_t>(window)];
        const double n = static_cast<double>(std::min<std::size_t>(i + 1, static_cast<std::size_t>(window)));
        out[i] = acc / n;
    }
    return out;
}

}  // namespace isac

#endif  // ISAC_EXPERIMENT_HPP
