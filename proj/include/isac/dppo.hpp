// SPDX-License-Identifier: Apache-2.0
//
// Multi-worker training runtime: workers collect trajectories under the
// latest global policy between full-barrier generations; the chief pools the
// batches, runs the shared update pipeline, and broadcasts new parameters.
// All cross-thread transfer is by value. With per-worker RNG streams and
// worker-ordered pooling the result is independent of thread scheduling.
#ifndef ISAC_DPPO_HPP
#define ISAC_DPPO_HPP

#include "isac/trainer.hpp"

#include <condition_variable>
#include <map>
#include <mutex>
#include <thread>

namespace isac {

struct DppoConfig {
    int workers = 4;
    int horizon = 8;      // transitions each worker collects per generation
    int quorum = 0;       // batches required per update; 0 means all workers
    bool deterministic = true;  // forces full quorum and worker-ordered pooling

    int effective_quorum() const {
        return (deterministic || quorum <= 0 || quorum > workers) ? workers : quorum;
    }
};

struct WorkerSlot {
    int worker_id = 0;
    CollectContext ctx;
    DenseNet actor_replica;
    DenseNet critic_replica;
    long replica_generation = -1;

    WorkerSlot(int id, CollectContext c) : worker_id(id), ctx(std::move(c)) {}
};

struct WorkerBatch {
    int worker_id = 0;
    long generation = 0;
    TrajectoryBatch batch;
    std::vector<double> episode_f0;  // per finished episode, mean f0
    std::vector<double> episode_lr;
};

// Collects `horizon` transitions under the slot's replica parameters,
// resetting the environment at episode boundaries. The context must arrive
// with an active episode (begin_episode already called).
inline WorkerBatch worker_collect(WorkerSlot& slot, int horizon, int steps_per_episode,
                                  const PrimalDualPpoTrainer& trainer, long generation,
                                  long* episode_counter) {
    WorkerBatch out;
    out.worker_id = slot.worker_id;
    out.generation = generation;
    if (slot.replica_generation != generation)
        throw ContractViolation("worker_collect: replica desynced from generation");
    double acc_f0 = 0.0, acc_lr = 0.0;
    int acc_n = 0;
    for (int i = 0; i < horizon; ++i) {
        Transition tr = trainer.collect_one(slot.ctx, slot.worker_id, slot.actor_replica,
                                            slot.critic_replica, *episode_counter);
        tr.generation = generation;
        acc_f0 += tr.f0;
        acc_lr += tr.l_r;
        ++acc_n;
        out.batch.records.push_back(std::move(tr));
        if (++slot.ctx.step_in_episode >= steps_per_episode) {
            out.episode_f0.push_back(acc_f0 / acc_n);
            out.episode_lr.push_back(acc_lr / acc_n);
            acc_f0 = acc_lr = 0.0;
            acc_n = 0;
            ++*episode_counter;
            slot.ctx.begin_episode();
        }
    }
    return out;
}

struct ChiefState {
    PrimalDualPpoTrainer* trainer = nullptr;
    long generation = 0;
    long discarded_batches = 0;
};

// Pools worker batches in worker order, applies one global update, and
// advances the generation. Batches from another generation are discarded.
// An empty pool is a no-op update; the counter still increments.
inline UpdateStats chief_update(ChiefState& chief, std::vector<WorkerBatch>& batches) {
    std::sort(batches.begin(), batches.end(),
              [](const WorkerBatch& a, const WorkerBatch& b) { return a.worker_id < b.worker_id; });
    TrajectoryBatch pooled;
    std::vector<std::pair<int, int>> slices;
    for (auto& wb : batches) {
        if (wb.generation != chief.generation) {
            ++chief.discarded_batches;
            continue;
        }
        const int start = static_cast<int>(pooled.size());
        for (auto& r : wb.batch.records) pooled.records.push_back(std::move(r));
        const int len = static_cast<int>(pooled.size()) - start;
        if (len > 0) slices.push_back({start, len});
    }
    UpdateStats stats = chief.trainer->update_on_batch(pooled, slices);
    chief.generation = chief.trainer->generation();
    return stats;
}

struct DppoLog {
    std::vector<EpisodeLog> episodes;  // per worker-episode, merged in episode order
    std::vector<UpdateStats> updates;
    long discarded_batches = 0;
    std::vector<std::string> checkpoints;  // optional per-generation snapshots
};

// Runs Algorithm-2-style training: `generations` rounds of collect + update.
// Worker threads run concurrently between barriers; the chief is the only
// writer of global parameters.
inline DppoLog run_training_dppo(PrimalDualPpoTrainer& trainer, const DppoConfig& cfg,
                                 long generations, int checkpoint_every = 0) {
    require(cfg.workers >= 1, "run_training_dppo: need at least one worker");
    trainer.set_multi_worker_mode(true);
    const int steps_per_episode = trainer.train_config().steps_per_episode;

    struct Shared {
        std::mutex m;
        std::condition_variable cv_workers;  // signaled when a new generation opens
        std::condition_variable cv_chief;    // signaled when a batch lands
        long open_generation = 0;
        DenseNet actor_snapshot;
        DenseNet critic_snapshot;
        std::map<long, std::vector<WorkerBatch>> inbox;
        bool done = false;
    } shared;

    shared.actor_snapshot = trainer.actor();
    shared.critic_snapshot = trainer.critic();

    std::vector<WorkerSlot> slots;
    std::vector<long> episode_counters(static_cast<std::size_t>(cfg.workers), 0);
    slots.reserve(static_cast<std::size_t>(cfg.workers));
    for (int w = 0; w < cfg.workers; ++w)
        slots.emplace_back(w, trainer.make_context(w));
    for (auto& s : slots) s.ctx.begin_episode();

    DppoLog log;
    std::vector<std::vector<double>> worker_f0(static_cast<std::size_t>(cfg.workers));
    std::vector<std::vector<double>> worker_lr(static_cast<std::size_t>(cfg.workers));

    auto worker_fn = [&](int w) {
        WorkerSlot& slot = slots[static_cast<std::size_t>(w)];
        long my_gen = 0;
        for (;;) {
            {
                std::unique_lock<std::mutex> lk(shared.m);
                shared.cv_workers.wait(lk, [&] { return shared.done || shared.open_generation == my_gen; });
                if (shared.done) return;
                slot.actor_replica = shared.actor_snapshot;
                slot.critic_replica = shared.critic_snapshot;
                slot.replica_generation = my_gen;
            }
            WorkerBatch wb = worker_collect(slot, cfg.horizon, steps_per_episode, trainer, my_gen,
                                            &episode_counters[static_cast<std::size_t>(w)]);
            for (double v : wb.episode_f0) worker_f0[static_cast<std::size_t>(w)].push_back(v);
            for (double v : wb.episode_lr) worker_lr[static_cast<std::size_t>(w)].push_back(v);
            {
                std::lock_guard<std::mutex> lk(shared.m);
                shared.inbox[my_gen].push_back(std::move(wb));
            }
            shared.cv_chief.notify_one();
            ++my_gen;
        }
    };

    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(cfg.workers));
    for (int w = 0; w < cfg.workers; ++w) threads.emplace_back(worker_fn, w);

    ChiefState chief;
    chief.trainer = &trainer;
    const int quorum = cfg.effective_quorum();
    for (long g = 0; g < generations; ++g) {
        std::vector<WorkerBatch> batches;
        {
            std::unique_lock<std::mutex> lk(shared.m);
            shared.cv_chief.wait(lk, [&] {
                return static_cast<int>(shared.inbox[g].size()) >= quorum;
            });
            batches = std::move(shared.inbox[g]);
            shared.inbox.erase(g);
        }
        log.updates.push_back(chief_update(chief, batches));
        if (checkpoint_every > 0 && (g + 1) % checkpoint_every == 0)
            log.checkpoints.push_back(trainer.serialize_params());
        {
            std::lock_guard<std::mutex> lk(shared.m);
            shared.actor_snapshot = trainer.actor();
            shared.critic_snapshot = trainer.critic();
            shared.open_generation = g + 1;
            if (g + 1 == generations) shared.done = true;
        }
        shared.cv_workers.notify_all();
    }
    {
        std::lock_guard<std::mutex> lk(shared.m);
        shared.done = true;
    }
    shared.cv_workers.notify_all();
    for (auto& t : threads) t.join();

    // Merge per-worker episode traces in (episode, worker) order.
    std::size_t max_ep = 0;
    for (const auto& v : worker_f0) max_ep = std::max(max_ep, v.size());
    for (std::size_t e = 0; e < max_ep; ++e) {
        EpisodeLog el;
        el.episode = static_cast<long>(e);
        int n = 0;
        for (std::size_t w = 0; w < worker_f0.size(); ++w) {
            if (e < worker_f0[w].size()) {
                el.mean_f0 += worker_f0[w][e];
                el.mean_lr += worker_lr[w][e];
                ++n;
            }
        }
        if (n) {
            el.mean_f0 /= n;
            el.mean_lr /= n;
        }
        el.mean_reward = el.mean_f0;
        el.constraint_ok = el.mean_lr <= trainer.scenario().ell ? 1.0 : 0.0;
        el.x = trainer.pd_state().x;
        el.lambda = trainer.pd_state().lambda;
        el.mu = trainer.pd_state().mu;
        el.f2 = trainer.scenario().ell - el.mean_lr;
        log.episodes.push_back(std::move(el));
    }
    log.discarded_batches = chief.discarded_batches;
    return log;
}

}  // namespace isac

#endif  // ISAC_DPPO_HPP
