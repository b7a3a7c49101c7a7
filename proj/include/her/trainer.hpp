#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "her/agents.hpp"
#include "her/envs.hpp"
#include "her/normalize.hpp"
#include "her/replay.hpp"

namespace her {

enum class SyncMode { step, cycle };

std::string_view to_string(SyncMode m);
SyncMode parse_sync_mode(std::string_view s);

struct TrainConfig {
    int epochs = 200;
    int cycles_per_epoch = 50;
    int episodes_per_cycle = 16;
    int optimization_steps = 40;
    int batch_size = 128;
    std::size_t buffer_capacity = 1'000'000;
    double gamma = 0.98;
    double polyak_decay = 0.95;

    int workers = 1;
    SyncMode sync = SyncMode::step;
    bool identical_worker_seeds = false;
    bool average_adam = false;

    bool her = true;
    StrategySpec strategy{};
    RewardSpec reward{};
    bool single_goal = false;
    int eval_episodes = 100;
    std::uint64_t seed = 0;

    bool count_based = false;
    double alpha = 1.0;
    double beta = 0.01;

    /// Stop after the first epoch whose worker-0 eval success reaches this value (<= 0 disables).
    double stop_at_success = 0.0;
    /// Write real elapsed seconds into metrics; off keeps metrics byte-reproducible.
    bool record_wallclock = false;

    void validate() const;
};

struct MetricsRow {
    int epoch = 0;
    std::int64_t env_steps = 0;
    double train_success = 0.0;
    double eval_success = 0.0;
    double mean_return = 0.0;
    double mean_q = 0.0;
    double critic_loss = 0.0;
    double wallclock_s = 0.0;
    int worker_id = 0;
};

/// "epoch,env_steps,train_success,eval_success,mean_return,mean_q,critic_loss,wallclock_s,worker_id"
std::string metrics_csv_header();
std::string format_metrics_row(const MetricsRow& row);

struct TrainHooks {
    /// Rows arrive in (epoch, worker_id) order from a single thread.
    std::function<void(const MetricsRow&)> on_metrics;
    /// End of each epoch with worker 0's agent (checkpointing).
    std::function<void(int epoch, const Agent& agent)> on_epoch_end;
    /// Every generated training episode.
    std::function<void(int worker_id, const EpisodeTrace& trace)> on_episode;
    /// Worker 0's evaluation episodes.
    std::function<void(int epoch, int index, const EpisodeTrace& trace)> on_eval_episode;
    /// After every cross-worker synchronization (W > 1 only), with all agents.
    std::function<void(std::span<const Agent* const> agents)> on_sync;
};

struct WorkerResult {
    int worker_id = 0;
    std::unique_ptr<Agent> agent;
    std::unique_ptr<ReplayBuffer> buffer;
    std::int64_t env_steps = 0;
    std::int64_t episodes = 0;
    std::uint64_t pushes = 0;
    std::int64_t targets_seen = 0;
    double target_min = 0.0;
    double target_max = 0.0;
    std::int64_t optimization_steps = 0;
};

struct TrainResult {
    std::vector<MetricsRow> metrics;
    std::vector<WorkerResult> workers;
    RewardFunction reward_fn;
    TargetClip clip;
    int epochs_run = 0;
};

/// Reward bounds for the configuration, including the exploration bonus when enabled.
TargetClip target_clip_for(const TrainConfig& config, const RewardFunction& reward_fn);

/// Runs epochs x cycles of {generate episodes -> relabel and store -> optimize ->
/// update targets}, evaluating with the target networks after every epoch.
/// Deterministic for a fixed seed.
TrainResult run_training(const TrainConfig& config, const Environment& env, AgentKind agent_kind,
                         const AgentConfig& agent_config, const TrainHooks& hooks = {});

using Policy = std::function<Vec(const Vec& state, const Vec& goal)>;

struct EvalResult {
    double success_rate = 0.0;
    double mean_return = 0.0;
};

/// Noise-free rollouts of `policy`; success per the environment's success mode.
EvalResult evaluate_policy(const Environment& env, const Policy& policy, int episodes, std::uint64_t seed,
                           const std::optional<Vec>& fixed_goal = std::nullopt,
                           const std::function<void(int, const EpisodeTrace&)>& on_trace = {});

/// Rollouts with the agent's target networks.
EvalResult evaluate(const Agent& agent, const Environment& env, int episodes, std::uint64_t seed,
                    const std::optional<Vec>& fixed_goal = std::nullopt,
                    const std::function<void(int, const EpisodeTrace&)>& on_trace = {});

/// True when the episode succeeds under `mode` (any_timestep checks s_1..s_T).
bool episode_success(const Environment& env, const EpisodeTrace& trace);

/// Replaces every network (and optionally Adam moments) by the cross-worker mean.
/// When `pending` is non-empty, pending[w] holds worker w's observations since the
/// last sync: they are folded into `shared` and every agent's normalizer becomes
/// `shared`.
void worker_sync(std::span<Agent* const> agents, bool average_adam, std::span<RunningNormalizer* const> pending = {},
                 RunningNormalizer* shared = nullptr);

/// Optimal values V*(d) of the bit-flip MDP as a function of Hamming distance d,
/// for d = 0 .. max_distance, by value iteration until within `tolerance` of the fixed point.
Vec bitflip_value_iteration(int max_distance, double gamma, double tolerance = 1e-13);

struct HammingReport {
    int pairs = 0;
    int optimal = 0;  // reached the goal in exactly Hamming(s0, g) steps
    int solved = 0;   // reached the goal at all within the horizon

    double optimal_fraction() const { return pairs ? double(optimal) / pairs : 0.0; }
};

/// Greedy target-network rollouts on random (s0, g) pairs.
HammingReport hamming_optimality(const Agent& agent, const BitFlip& env, int pairs, std::uint64_t seed);

}  // namespace her
