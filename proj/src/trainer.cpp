#include "her/trainer.hpp"

#include <atomic>
#include <barrier>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <exception>
#include <mutex>
#include <thread>

#include "her/errors.hpp"

namespace her {

namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t kEvalSalt = 0x6576616cULL;

EpisodeTrace rollout(const Environment& env, Vec s0, Vec goal, std::int64_t id,
                     const std::function<Vec(const Vec&, const Vec&)>& pick) {
    EpisodeTrace trace;
    trace.episode_id = id;
    trace.goal = std::move(goal);
    const int T = env.horizon();
    trace.states.reserve(T + 1);
    trace.actions.reserve(T);
    trace.achieved.reserve(T + 1);
    trace.achieved.push_back(env.achieved_goal(s0));
    trace.states.push_back(std::move(s0));
    for (int t = 0; t < T; ++t) {
        Vec a = pick(trace.states.back(), trace.goal);
        Vec next = env.step(trace.states.back(), a);
        trace.achieved.push_back(env.achieved_goal(next));
        trace.states.push_back(std::move(next));
        trace.actions.push_back(std::move(a));
    }
    return trace;
}

double episode_return(const EpisodeTrace& trace, const RewardFunction& reward_fn) {
    double total = 0.0;
    for (int t = 0; t < trace.horizon(); ++t)
        total += reward_fn(trace.achieved[t], trace.achieved[t + 1], trace.goal);
    return total;
}

EpisodeStart start_episode(const Environment& env, const std::optional<Vec>& fixed_goal, Rng& rng) {
    if (fixed_goal) return {env.reset_with_goal(*fixed_goal, rng), *fixed_goal};
    return env.reset(rng);
}

class Worker {
public:
    Worker(int id, const TrainConfig& config, const Environment& env, std::unique_ptr<Agent> agent,
           const RewardFunction& reward_fn, const std::optional<Vec>& fixed_goal, const TrainHooks& hooks)
        : id_(id),
          config_(config),
          env_(env.clone()),
          agent_(std::move(agent)),
          reward_fn_(reward_fn),
          fixed_goal_(fixed_goal),
          hooks_(hooks),
          rng_(config.identical_worker_seeds ? config.seed : config.seed ^ std::uint64_t(id)),
          buffer_(std::make_unique<ReplayBuffer>(config.buffer_capacity, env.state_dim(), env.action_space().dim(),
                                                 env.goal_dim())),
          pending_(agent_->normalizer().dim(), agent_->normalizer().clip(), agent_->normalizer().variance_floor()) {
        if (config.her) strategy_ = config.strategy;
        if (config.count_based) counter_.emplace(config.alpha, config.beta);
    }

    void run_episode() {
        const EpisodeStart start = start_episode(*env_, fixed_goal_, rng_);
        const EpisodeTrace trace = rollout(*env_, start.state, start.goal, episodes_,
                                           [&](const Vec& s, const Vec& g) { return agent_->explore(s, g, rng_); });
        ++episodes_;
        env_steps_ += trace.horizon();
        if (hooks_.on_episode) hooks_.on_episode(id_, trace);

        std::vector<double> bonuses;
        if (counter_) {
            bonuses.reserve(trace.horizon());
            for (int t = 0; t < trace.horizon(); ++t)
                bonuses.push_back(counter_->intrinsic_bonus(trace.achieved[t + 1] - trace.goal));
        }
        const std::size_t pushed = relabel_and_store(*buffer_, trace, strategy_, reward_fn_, rng_, bonuses);
        pushes_ += pushed;
        observe_stored(pushed);

        epoch_episodes_ += 1;
        epoch_successes_ += episode_success(*env_, trace) ? 1 : 0;
        epoch_return_ += episode_return(trace, reward_fn_);
    }

    void optimize() {
        if (buffer_->size() == 0) return;
        const Batch batch = buffer_->sample_batch(std::size_t(config_.batch_size), rng_);
        const UpdateStats st = agent_->update(batch);
        if (optimization_steps_ == 0) {
            target_min_ = st.target_min;
            target_max_ = st.target_max;
        } else {
            target_min_ = std::min(target_min_, st.target_min);
            target_max_ = std::max(target_max_, st.target_max);
        }
        targets_seen_ += batch.size();
        ++optimization_steps_;
        epoch_loss_ += st.critic_loss;
        epoch_q_ += st.mean_q;
        epoch_updates_ += 1;
    }

    void update_targets() { agent_->update_targets(config_.polyak_decay); }

    /// Single-worker normalizer update: fold pending observations straight in.
    void fold_pending() {
        agent_->normalizer().merge(pending_);
        pending_.reset();
    }

    MetricsRow end_epoch(int epoch, double wallclock) {
        MetricsRow row;
        row.epoch = epoch;
        row.env_steps = env_steps_;
        row.train_success = epoch_episodes_ ? double(epoch_successes_) / double(epoch_episodes_) : 0.0;
        row.mean_return = epoch_episodes_ ? epoch_return_ / double(epoch_episodes_) : 0.0;
        row.mean_q = epoch_updates_ ? epoch_q_ / double(epoch_updates_) : 0.0;
        row.critic_loss = epoch_updates_ ? epoch_loss_ / double(epoch_updates_) : 0.0;
        row.wallclock_s = wallclock;
        row.worker_id = id_;

        std::function<void(int, const EpisodeTrace&)> on_trace;
        if (id_ == 0 && hooks_.on_eval_episode)
            on_trace = [&](int i, const EpisodeTrace& tr) { hooks_.on_eval_episode(epoch, i, tr); };
        const std::uint64_t eval_seed = mix(mix(config_.seed, kEvalSalt + std::uint64_t(id_)), std::uint64_t(epoch));
        row.eval_success = evaluate(*agent_, *env_, config_.eval_episodes, eval_seed, fixed_goal_, on_trace).success_rate;

        epoch_episodes_ = epoch_successes_ = epoch_updates_ = 0;
        epoch_return_ = epoch_q_ = epoch_loss_ = 0.0;
        return row;
    }

    Agent& agent() { return *agent_; }
    RunningNormalizer& pending() { return pending_; }

    WorkerResult finish() {
        WorkerResult r;
        r.worker_id = id_;
        r.agent = std::move(agent_);
        r.buffer = std::move(buffer_);
        r.env_steps = env_steps_;
        r.episodes = episodes_;
        r.pushes = pushes_;
        r.targets_seen = targets_seen_;
        r.target_min = target_min_;
        r.target_max = target_max_;
        r.optimization_steps = optimization_steps_;
        return r;
    }

private:
    void observe_stored(std::size_t pushed) {
        // The newest `pushed` transitions, or every stored one if the ring is smaller.
        const std::size_t n = std::min(pushed, buffer_->size());
        if (n == 0) return;
        const int sd = buffer_->state_dim();
        const int gd = buffer_->goal_dim();
        Mat rows(Eigen::Index(n), sd + gd);
        for (std::size_t i = 0; i < n; ++i) {
            const Transition tr = buffer_->at(buffer_->size() - n + i);
            rows.row(Eigen::Index(i)).head(sd) = tr.state.transpose();
            rows.row(Eigen::Index(i)).tail(gd) = tr.goal.transpose();
        }
        pending_.observe(rows);
    }

    int id_;
    const TrainConfig& config_;
    std::unique_ptr<Environment> env_;
    std::unique_ptr<Agent> agent_;
    const RewardFunction& reward_fn_;
    const std::optional<Vec>& fixed_goal_;
    const TrainHooks& hooks_;
    Rng rng_;
    std::unique_ptr<ReplayBuffer> buffer_;
    RunningNormalizer pending_;
    std::optional<StrategySpec> strategy_;
    std::optional<VisitCounter> counter_;

    std::int64_t episodes_ = 0;
    std::int64_t env_steps_ = 0;
    std::uint64_t pushes_ = 0;
    std::int64_t targets_seen_ = 0;
    std::int64_t optimization_steps_ = 0;
    double target_min_ = 0.0;
    double target_max_ = 0.0;

    std::int64_t epoch_episodes_ = 0;
    std::int64_t epoch_successes_ = 0;
    std::int64_t epoch_updates_ = 0;
    double epoch_return_ = 0.0;
    double epoch_q_ = 0.0;
    double epoch_loss_ = 0.0;
};

std::string format_number(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

}  // namespace

std::string_view to_string(SyncMode m) { return m == SyncMode::step ? "step" : "cycle"; }

SyncMode parse_sync_mode(std::string_view s) {
    if (s == "step") return SyncMode::step;
    if (s == "cycle") return SyncMode::cycle;
    throw ConfigError("unknown sync mode '" + std::string(s) + "' (expected step or cycle)");
}

void TrainConfig::validate() const {
    auto positive = [](long long v, const char* name) {
        if (v <= 0) throw ConfigError(std::string(name) + " must be positive");
    };
    positive(epochs, "epochs");
    positive(cycles_per_epoch, "cycles_per_epoch");
    positive(episodes_per_cycle, "episodes_per_cycle");
    if (optimization_steps < 0) throw ConfigError("optimization_steps must be non-negative");
    positive(batch_size, "batch_size");
    positive((long long)buffer_capacity, "buffer_capacity");
    positive(workers, "workers");
    if (eval_episodes < 0) throw ConfigError("eval_episodes must be non-negative");
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
    if (!(polyak_decay >= 0.0 && polyak_decay <= 1.0)) throw ConfigError("polyak_decay must lie in [0, 1]");
    if (her) strategy.validate();
    if (count_based) {
        if (!(alpha > 0.0)) throw ConfigError("count-based alpha must be positive");
        if (!(beta > 0.0)) throw ConfigError("count-based beta must be positive");
    }
}

std::string metrics_csv_header() {
    return "epoch,env_steps,train_success,eval_success,mean_return,mean_q,critic_loss,wallclock_s,worker_id";
}

std::string format_metrics_row(const MetricsRow& r) {
    return std::to_string(r.epoch) + ',' + std::to_string(r.env_steps) + ',' + format_number(r.train_success) + ',' +
           format_number(r.eval_success) + ',' + format_number(r.mean_return) + ',' + format_number(r.mean_q) + ',' +
           format_number(r.critic_loss) + ',' + format_number(r.wallclock_s) + ',' + std::to_string(r.worker_id);
}

TargetClip target_clip_for(const TrainConfig& config, const RewardFunction& reward_fn) {
    const double bonus = config.count_based ? config.alpha : 0.0;
    return TargetClip::for_rewards(reward_fn.min_reward(), reward_fn.max_reward() + bonus, config.gamma);
}

bool episode_success(const Environment& env, const EpisodeTrace& trace) {
    const int T = trace.horizon();
    if (env.success_mode() == SuccessMode::final_state) return env.goal_satisfied(trace.states[T], trace.goal);
    for (int t = 1; t <= T; ++t)
        if (env.goal_satisfied(trace.states[t], trace.goal)) return true;
    return false;
}

EvalResult evaluate_policy(const Environment& env, const Policy& policy, int episodes, std::uint64_t seed,
                           const std::optional<Vec>& fixed_goal,
                           const std::function<void(int, const EpisodeTrace&)>& on_trace) {
    EvalResult out;
    if (episodes <= 0) return out;
    Rng rng(seed);
    const RewardFunction sparse(env, RewardSpec{});
    int successes = 0;
    double total = 0.0;
    for (int i = 0; i < episodes; ++i) {
        const EpisodeStart start = start_episode(env, fixed_goal, rng);
        const EpisodeTrace trace = rollout(env, start.state, start.goal, i, policy);
        successes += episode_success(env, trace) ? 1 : 0;
        total += episode_return(trace, sparse);
        if (on_trace) on_trace(i, trace);
    }
    out.success_rate = double(successes) / double(episodes);
    out.mean_return = total / double(episodes);
    return out;
}

EvalResult evaluate(const Agent& agent, const Environment& env, int episodes, std::uint64_t seed,
                    const std::optional<Vec>& fixed_goal,
                    const std::function<void(int, const EpisodeTrace&)>& on_trace) {
    const Policy policy = [&](const Vec& s, const Vec& g) { return agent.act(s, g, true); };
    return evaluate_policy(env, policy, episodes, seed, fixed_goal, on_trace);
}

void worker_sync(std::span<Agent* const> agents, bool average_adam, std::span<RunningNormalizer* const> pending,
                 RunningNormalizer* shared) {
    if (agents.empty()) return;
    const std::size_t W = agents.size();
    const std::size_t nets = agents[0]->networks().size();
    std::vector<const Vec*> views(W);
    for (std::size_t n = 0; n < nets; ++n) {
        for (std::size_t w = 0; w < W; ++w) views[w] = &agents[w]->networks()[n]->params();
        const Vec mean = mean_of(views);
        for (std::size_t w = 0; w < W; ++w) agents[w]->networks()[n]->params() = mean;
    }
    if (average_adam) {
        const std::size_t opts = agents[0]->optimizers().size();
        for (std::size_t o = 0; o < opts; ++o) {
            for (std::size_t w = 0; w < W; ++w) views[w] = &agents[w]->optimizers()[o]->m;
            const Vec m = mean_of(views);
            for (std::size_t w = 0; w < W; ++w) views[w] = &agents[w]->optimizers()[o]->v;
            const Vec v = mean_of(views);
            for (std::size_t w = 0; w < W; ++w) {
                agents[w]->optimizers()[o]->m = m;
                agents[w]->optimizers()[o]->v = v;
            }
        }
    }
    if (!pending.empty()) {
        if (pending.size() != W) throw UsageError("worker_sync: one pending normalizer per agent required");
        if (shared == nullptr) throw UsageError("worker_sync: shared normalizer required");
        for (RunningNormalizer* p : pending) {
            shared->merge(*p);
            p->reset();
        }
        for (Agent* a : agents) a->normalizer() = *shared;
    }
}

TrainResult run_training(const TrainConfig& config, const Environment& env, AgentKind agent_kind,
                         const AgentConfig& agent_config, const TrainHooks& hooks) {
    config.validate();
    const RewardFunction reward_fn(env, config.reward);
    const TargetClip clip = target_clip_for(config, reward_fn);
    AgentConfig ac = agent_config;
    ac.gamma = config.gamma;
    ac.clip = clip;

    std::optional<Vec> fixed_goal;
    if (config.single_goal) {
        Rng goal_rng(mix(config.seed, 0x676f616cULL));
        fixed_goal = env.sample_goal(goal_rng);
    }

    const int W = config.workers;
    const auto prototype = make_agent(agent_kind, env, ac, config.seed);
    std::vector<std::unique_ptr<Worker>> workers;
    for (int w = 0; w < W; ++w)
        workers.push_back(std::make_unique<Worker>(w, config, env, prototype->clone(), reward_fn, fixed_goal, hooks));

    std::vector<MetricsRow> metrics;
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] {
        if (!config.record_wallclock) return 0.0;
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    auto emit = [&](const MetricsRow& row) {
        metrics.push_back(row);
        if (hooks.on_metrics) hooks.on_metrics(row);
    };
    auto stop_after = [&](const MetricsRow& row0) {
        return config.stop_at_success > 0.0 && row0.eval_success >= config.stop_at_success;
    };
    int epochs_run = 0;

    if (W == 1) {
        Worker& wk = *workers[0];
        for (int epoch = 0; epoch < config.epochs; ++epoch) {
            for (int c = 0; c < config.cycles_per_epoch; ++c) {
                for (int e = 0; e < config.episodes_per_cycle; ++e) wk.run_episode();
                wk.fold_pending();
                for (int s = 0; s < config.optimization_steps; ++s) wk.optimize();
                wk.update_targets();
            }
            const MetricsRow row = wk.end_epoch(epoch, elapsed());
            emit(row);
            if (hooks.on_epoch_end) hooks.on_epoch_end(epoch, wk.agent());
            epochs_run = epoch + 1;
            if (stop_after(row)) break;
        }
    } else {
        std::vector<Agent*> agents;
        std::vector<const Agent*> const_agents;
        std::vector<RunningNormalizer*> pendings;
        for (auto& wk : workers) {
            agents.push_back(&wk->agent());
            const_agents.push_back(&wk->agent());
            pendings.push_back(&wk->pending());
        }
        RunningNormalizer shared = prototype->normalizer();
        std::vector<MetricsRow> epoch_rows(W);
        bool stop = false;
        std::atomic<bool> failed = false;
        std::exception_ptr error;
        std::mutex error_mutex;

        auto on_sync_with_stats = [&]() noexcept {
            if (failed) return;
            try {
                worker_sync(agents, config.average_adam, pendings, &shared);
                if (hooks.on_sync) hooks.on_sync(const_agents);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                failed = true;
            }
        };
        auto on_sync_params = [&]() noexcept {
            if (failed) return;
            try {
                worker_sync(agents, config.average_adam);
                if (hooks.on_sync) hooks.on_sync(const_agents);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                failed = true;
            }
        };
        auto on_epoch = [&]() noexcept {
            if (failed) {
                stop = true;
                return;
            }
            try {
                for (const MetricsRow& row : epoch_rows) emit(row);
                if (hooks.on_epoch_end) hooks.on_epoch_end(epoch_rows[0].epoch, *agents[0]);
                epochs_run = epoch_rows[0].epoch + 1;
                stop = stop_after(epoch_rows[0]);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                failed = true;
            }
            stop = stop || failed;
        };
        std::barrier stats_barrier(W, on_sync_with_stats);
        std::barrier param_barrier(W, on_sync_params);
        std::barrier epoch_barrier(W, on_epoch);

        auto body = [&](int w) {
            Worker& wk = *workers[w];
            auto guarded = [&](auto&& fn) {
                if (failed) return;
                try {
                    fn();
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                    failed = true;
                }
            };
            for (int epoch = 0; epoch < config.epochs; ++epoch) {
                for (int c = 0; c < config.cycles_per_epoch; ++c) {
                    for (int e = 0; e < config.episodes_per_cycle; ++e) guarded([&] { wk.run_episode(); });
                    stats_barrier.arrive_and_wait();
                    for (int s = 0; s < config.optimization_steps; ++s) {
                        guarded([&] { wk.optimize(); });
                        if (config.sync == SyncMode::step) param_barrier.arrive_and_wait();
                    }
                    guarded([&] { wk.update_targets(); });
                    if (config.sync == SyncMode::cycle) param_barrier.arrive_and_wait();
                }
                guarded([&] { epoch_rows[w] = wk.end_epoch(epoch, elapsed()); });
                epoch_barrier.arrive_and_wait();
                if (stop) break;
            }
        };
        // Workers only leave the loop together (after the epoch barrier), so a failure
        // in one of them turns the remaining phases into no-ops instead of a deadlock.
        std::vector<std::thread> threads;
        for (int w = 0; w < W; ++w) threads.emplace_back(body, w);
        for (auto& t : threads) t.join();
        if (error) std::rethrow_exception(error);
    }

    TrainResult result{std::move(metrics), {}, reward_fn, clip, epochs_run};
    for (auto& wk : workers) result.workers.push_back(wk->finish());
    return result;
}

Vec bitflip_value_iteration(int max_distance, double gamma, double tolerance) {
    if (max_distance < 1) throw ConfigError("max_distance must be at least 1");
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
    const int n = max_distance;
    Vec V = Vec::Zero(n + 1);
    for (;;) {
        Vec next(n + 1);
        for (int d = 0; d <= n; ++d) {
            // Flipping a mismatched bit moves to d - 1 and earns 0 exactly when it lands on the goal.
            double best = -std::numeric_limits<double>::infinity();
            if (d > 0) best = std::max(best, (d - 1 == 0 ? 0.0 : -1.0) + gamma * V[d - 1]);
            if (d < n) best = std::max(best, -1.0 + gamma * V[d + 1]);
            next[d] = best;
        }
        const double change = (next - V).cwiseAbs().maxCoeff();
        V = std::move(next);
        // Bound on the distance to the fixed point. The iterates decrease monotonically
        // from zero, so in floating point they settle exactly and change reaches 0.
        if (change * gamma / (1.0 - gamma) <= tolerance) break;
    }
    return V;
}

HammingReport hamming_optimality(const Agent& agent, const BitFlip& env, int pairs, std::uint64_t seed) {
    HammingReport report;
    Rng rng(seed);
    for (int i = 0; i < pairs; ++i) {
        const EpisodeStart start = env.reset(rng);
        const int d = int((start.state - start.goal).cwiseAbs().sum());
        Vec s = start.state;
        int reached = -1;
        for (int t = 1; t <= env.horizon(); ++t) {
            s = env.step(s, agent.act(s, start.goal, true));
            if (env.goal_satisfied(s, start.goal)) {
                reached = t;
                break;
            }
        }
        ++report.pairs;
        if (reached >= 0) ++report.solved;
        if (reached == d) ++report.optimal;
    }
    return report;
}

}  // namespace her
