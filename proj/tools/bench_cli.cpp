// SPDX-License-Identifier: Apache-2.0
//
// Experiment driver. Loads a config (or starts from defaults), applies a
// preset and CLI overrides, runs the selected algorithm over the configured
// seeds, and writes the CSV artifacts into the output directory.

#include "isac/runner.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"IRS-aided ISAC training and baseline workbench"};

    std::string config_path;
    std::string preset;
    std::string out_dir;
    std::string algo;
    std::vector<std::uint64_t> seeds;
    int episodes = -1;
    int workers = -1;
    int horizon = -1;
    int lstep = -1;
    int quorum = -1;
    int checkpoint_every = -1;
    bool deterministic = false;
    bool non_deterministic = false;

    app.add_option("--config", config_path, "Config file (key = value with [sections])");
    app.add_option("--preset", preset, "Preset: functional or paper-sim");
    app.add_option("--seed", seeds, "Seed(s); repeat or comma-separate");
    app.add_option("--out-dir", out_dir, "Artifact output directory");
    app.add_option("--algo", algo, "ppo_pd | dppo_pd | a2c_pd | a3c | zf | mrt | wmmse | random");
    app.add_option("--episodes", episodes, "Training episodes");
    app.add_option("--workers", workers, "Worker count (dppo_pd / a3c)");
    app.add_option("--horizon", horizon, "Per-worker transitions per generation");
    app.add_option("--lstep", lstep, "L-step return horizon");
    app.add_option("--quorum", quorum, "Worker batches required per update (0 = all)");
    app.add_option("--checkpoint-every", checkpoint_every, "Checkpoint every N generations");
    app.add_flag("--deterministic", deterministic, "Pin the barrier schedule and RNG streams");
    app.add_flag("--no-deterministic", non_deterministic, "Allow quorum-based scheduling");

    CLI11_PARSE(app, argc, argv);

    try {
        isac::ExperimentConfig cfg;
        if (!config_path.empty()) cfg = isac::load_config(config_path);
        if (!preset.empty()) isac::apply_preset(cfg, preset);
        if (!algo.empty()) cfg.algo = isac::algo_from_name(algo);
        if (!seeds.empty()) cfg.seeds = seeds;
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (episodes >= 0) cfg.train.episodes = episodes;
        if (workers >= 0) cfg.dppo.workers = workers;
        if (horizon >= 0) cfg.dppo.horizon = horizon;
        if (lstep >= 0) cfg.train.ppo.lstep = lstep;
        if (quorum >= 0) cfg.dppo.quorum = quorum;
        if (checkpoint_every >= 0) cfg.checkpoint_every = checkpoint_every;
        if (deterministic) cfg.deterministic = cfg.dppo.deterministic = true;
        if (non_deterministic) cfg.deterministic = cfg.dppo.deterministic = false;
        cfg.validate();

        std::cout << "config_hash and echo written to " << cfg.out_dir << std::endl;
        const isac::ExperimentResult result = isac::run_experiment(cfg);
        if (result.failed) {
            std::cerr << "error: run: " << result.error << std::endl;
            return 3;
        }
        for (const auto& s : result.seeds) {
            std::cout << "seed " << s.seed;
            if (!s.episodes.empty())
                std::cout << " final_reward=" << isac::format_double(s.episodes.back().mean_f0)
                          << " final_lr=" << isac::format_double(s.episodes.back().mean_lr);
            if (s.final_capacity > 0.0)
                std::cout << " greedy_capacity=" << isac::format_double(s.final_capacity)
                          << " random_capacity=" << isac::format_double(s.random_capacity);
            std::cout << std::endl;
        }
        std::cout << "ok: artifacts in " << cfg.out_dir << std::endl;
        return 0;
    } catch (const isac::ConfigError& e) {
        std::cerr << "error: config: " << e.what() << std::endl;
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: runtime: " << e.what() << std::endl;
        return 1;
    }
}
