#include "her/replay.hpp"

#include <istream>
#include <ostream>
#include <string>

#include "her/errors.hpp"
#include "her/serialize.hpp"

namespace her {

namespace {

void put(std::vector<double>& store, std::size_t slot, bool append, const Vec& v, int dim, const char* field) {
    if (v.size() != dim) throw ShapeError(std::string("transition field '") + field + "' has the wrong length");
    if (append) {
        store.insert(store.end(), v.data(), v.data() + dim);
    } else {
        std::copy(v.data(), v.data() + dim, store.begin() + std::ptrdiff_t(slot) * dim);
    }
}

template <typename T>
void put_scalar(std::vector<T>& store, std::size_t slot, bool append, T value) {
    if (append)
        store.push_back(value);
    else
        store[slot] = value;
}

Vec get(const std::vector<double>& store, std::size_t slot, int dim) {
    return Eigen::Map<const Vec>(store.data() + std::ptrdiff_t(slot) * dim, dim);
}

std::size_t uniform_index(std::size_t n, Rng& rng) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace

Batch make_batch(std::span<const Transition> transitions) {
    if (transitions.empty()) throw UsageError("cannot build an empty batch");
    const auto n = Eigen::Index(transitions.size());
    const auto& first = transitions.front();
    Batch b;
    b.states.resize(n, first.state.size());
    b.actions.resize(n, first.action.size());
    b.rewards.resize(n);
    b.next_states.resize(n, first.next_state.size());
    b.goals.resize(n, first.goal.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& tr = transitions[std::size_t(i)];
        if (tr.state.size() != b.states.cols() || tr.action.size() != b.actions.cols() ||
            tr.next_state.size() != b.next_states.cols() || tr.goal.size() != b.goals.cols())
            throw ShapeError("batch transitions have inconsistent dimensions");
        b.states.row(i) = tr.state.transpose();
        b.actions.row(i) = tr.action.transpose();
        b.rewards[i] = tr.reward;
        b.next_states.row(i) = tr.next_state.transpose();
        b.goals.row(i) = tr.goal.transpose();
    }
    return b;
}

void EpisodeTrace::validate() const {
    const std::size_t T = actions.size();
    if (T == 0) throw ShapeError("episode trace has no steps");
    if (states.size() != T + 1) throw ShapeError("episode trace needs T+1 states");
    if (achieved.size() != T + 1) throw ShapeError("episode trace needs T+1 achieved goals");
    for (const auto& a : achieved)
        if (a.size() != goal.size()) throw ShapeError("achieved goal dimension differs from goal dimension");
}

// ---------------------------------------------------------------- ReplayBuffer

ReplayBuffer::ReplayBuffer(std::size_t capacity, int state_dim, int action_dim, int goal_dim)
    : capacity_(capacity), state_dim_(state_dim), action_dim_(action_dim), goal_dim_(goal_dim) {
    if (capacity == 0) throw ConfigError("replay buffer capacity must be positive");
    if (state_dim < 1 || action_dim < 1 || goal_dim < 1) throw ConfigError("replay buffer dimensions must be positive");
}

void ReplayBuffer::push(const Transition& tr) {
    const bool append = size_ < capacity_;
    const std::size_t slot = cursor_;
    put(states_, slot, append, tr.state, state_dim_, "state");
    put(actions_, slot, append, tr.action, action_dim_, "action");
    put(next_states_, slot, append, tr.next_state, state_dim_, "next_state");
    put(goals_, slot, append, tr.goal, goal_dim_, "goal");
    put(achieved_, slot, append, tr.achieved, goal_dim_, "achieved");
    put(achieved_next_, slot, append, tr.achieved_next, goal_dim_, "achieved_next");
    put_scalar(rewards_, slot, append, tr.reward);
    put_scalar(bonuses_, slot, append, tr.bonus);
    put_scalar(episode_ids_, slot, append, tr.episode_id);
    put_scalar(steps_, slot, append, tr.t);
    put_scalar(goal_sources_, slot, append, tr.goal_source);
    cursor_ = (cursor_ + 1) % capacity_;
    if (append) ++size_;
    ++pushes_;
}

Transition ReplayBuffer::read_slot(std::size_t slot) const {
    Transition tr;
    tr.state = get(states_, slot, state_dim_);
    tr.action = get(actions_, slot, action_dim_);
    tr.reward = rewards_[slot];
    tr.next_state = get(next_states_, slot, state_dim_);
    tr.goal = get(goals_, slot, goal_dim_);
    tr.achieved = get(achieved_, slot, goal_dim_);
    tr.achieved_next = get(achieved_next_, slot, goal_dim_);
    tr.bonus = bonuses_[slot];
    tr.episode_id = episode_ids_[slot];
    tr.t = steps_[slot];
    tr.goal_source = goal_sources_[slot];
    return tr;
}

Transition ReplayBuffer::at(std::size_t i) const {
    if (i >= size_) throw UsageError("replay buffer index out of range");
    const std::size_t oldest = size_ < capacity_ ? 0 : cursor_;
    return read_slot((oldest + i) % capacity_);
}

std::vector<Transition> ReplayBuffer::sample(std::size_t batch_size, Rng& rng) const {
    if (size_ == 0) throw UsageError("cannot sample from an empty replay buffer");
    std::vector<Transition> batch;
    batch.reserve(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) batch.push_back(read_slot(uniform_index(size_, rng)));
    return batch;
}

Batch ReplayBuffer::sample_batch(std::size_t batch_size, Rng& rng) const {
    if (size_ == 0) throw UsageError("cannot sample from an empty replay buffer");
    const auto n = Eigen::Index(batch_size);
    Batch b;
    b.states.resize(n, state_dim_);
    b.actions.resize(n, action_dim_);
    b.rewards.resize(n);
    b.next_states.resize(n, state_dim_);
    b.goals.resize(n, goal_dim_);
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::size_t slot = uniform_index(size_, rng);
        b.states.row(i) = get(states_, slot, state_dim_).transpose();
        b.actions.row(i) = get(actions_, slot, action_dim_).transpose();
        b.rewards[i] = rewards_[slot];
        b.next_states.row(i) = get(next_states_, slot, state_dim_).transpose();
        b.goals.row(i) = get(goals_, slot, goal_dim_).transpose();
    }
    return b;
}

Vec ReplayBuffer::sample_achieved_goal(Rng& rng) const {
    if (size_ == 0) throw UsageError("cannot sample from an empty replay buffer");
    return get(achieved_next_, uniform_index(size_, rng), goal_dim_);
}

// ---------------------------------------------------------------- strategies

std::string_view to_string(StrategyKind k) {
    switch (k) {
        case StrategyKind::final: return "final";
        case StrategyKind::future: return "future";
        case StrategyKind::episode: return "episode";
        case StrategyKind::random: return "random";
    }
    return "final";
}

StrategyKind parse_strategy(std::string_view s) {
    if (s == "final") return StrategyKind::final;
    if (s == "future") return StrategyKind::future;
    if (s == "episode") return StrategyKind::episode;
    if (s == "random") return StrategyKind::random;
    throw ConfigError("unknown replay strategy '" + std::string(s) + "'");
}

void StrategySpec::validate() const {
    if (kind != StrategyKind::final && k < 1) throw ConfigError("replay strategy needs k >= 1");
}

std::vector<ReplayGoal> select_replay_goals(const EpisodeTrace& trace, int t, const StrategySpec& spec,
                                            const ReplayBuffer* pool, Rng& rng) {
    const int T = trace.horizon();
    if (t < 0 || t >= T) throw UsageError("replay goal selection: step index out of range");
    std::vector<ReplayGoal> goals;
    switch (spec.kind) {
        case StrategyKind::final:
            goals.push_back({trace.achieved[std::size_t(T)], T});
            break;
        case StrategyKind::future: {
            std::uniform_int_distribution<int> pick(t + 1, T);
            for (int j = 0; j < spec.k; ++j) {
                const int i = pick(rng);
                goals.push_back({trace.achieved[std::size_t(i)], i});
            }
            break;
        }
        case StrategyKind::episode: {
            std::uniform_int_distribution<int> pick(0, T);
            for (int j = 0; j < spec.k; ++j) {
                const int i = pick(rng);
                goals.push_back({trace.achieved[std::size_t(i)], i});
            }
            break;
        }
        case StrategyKind::random:
            if (!pool || pool->size() == 0) throw UsageError("random replay strategy needs a non-empty goal pool");
            for (int j = 0; j < spec.k; ++j) goals.push_back({pool->sample_achieved_goal(rng), kPoolGoal});
            break;
    }
    return goals;
}

std::size_t relabel_and_store(ReplayBuffer& buffer, const EpisodeTrace& trace,
                              const std::optional<StrategySpec>& strategy, const RewardFunction& reward_fn, Rng& rng,
                              std::span<const double> bonuses) {
    trace.validate();
    const int T = trace.horizon();
    if (!bonuses.empty() && bonuses.size() != std::size_t(T))
        throw ShapeError("exploration bonuses must have one entry per step");
    if (strategy) strategy->validate();

    std::size_t pushes = 0;
    for (int t = 0; t < T; ++t) {
        const auto ti = std::size_t(t);
        Transition tr;
        tr.state = trace.states[ti];
        tr.action = trace.actions[ti];
        tr.next_state = trace.states[ti + 1];
        tr.goal = trace.goal;
        tr.achieved = trace.achieved[ti];
        tr.achieved_next = trace.achieved[ti + 1];
        tr.bonus = bonuses.empty() ? 0.0 : bonuses[ti];
        tr.reward = reward_fn(tr.achieved, tr.achieved_next, tr.goal) + tr.bonus;
        tr.episode_id = trace.episode_id;
        tr.t = t;
        tr.goal_source = kOriginalGoal;
        buffer.push(tr);
        ++pushes;

        if (!strategy) continue;
        for (auto& g : select_replay_goals(trace, t, *strategy, &buffer, rng)) {
            tr.goal = std::move(g.goal);
            tr.goal_source = g.source;
            tr.bonus = 0.0;
            tr.reward = reward_fn(tr.achieved, tr.achieved_next, tr.goal);
            buffer.push(tr);
            ++pushes;
        }
    }
    return pushes;
}

std::size_t audit_rewards(const ReplayBuffer& buffer, const RewardFunction& reward_fn) {
    std::size_t mismatches = 0;
    for (std::size_t i = 0; i < buffer.size(); ++i) {
        const Transition tr = buffer.at(i);
        if (reward_fn(tr.achieved, tr.achieved_next, tr.goal) + tr.bonus != tr.reward) ++mismatches;
    }
    return mismatches;
}

// ---------------------------------------------------------------- traces

void write_trace(std::ostream& os, const EpisodeTrace& trace) {
    trace.validate();
    os << "her-trace 1\n";
    os << "episode " << trace.episode_id << '\n';
    os << "steps " << trace.horizon() << '\n';
    os << "goal ";
    io::write_vector(os, trace.goal);
    os << '\n';
    for (const auto& s : trace.states) {
        os << "s ";
        io::write_vector(os, s);
        os << '\n';
    }
    for (const auto& a : trace.actions) {
        os << "a ";
        io::write_vector(os, a);
        os << '\n';
    }
    for (const auto& m : trace.achieved) {
        os << "m ";
        io::write_vector(os, m);
        os << '\n';
    }
    os << "end\n";
}

EpisodeTrace read_trace(std::istream& is) {
    io::TokenReader r(is, "trace");
    r.expect("her-trace");
    if (r.next_int() != 1) r.fail("unsupported trace version");
    EpisodeTrace tr;
    r.expect("episode");
    tr.episode_id = r.next_int();
    r.expect("steps");
    const std::int64_t T = r.next_int();
    if (T < 1) r.fail("trace needs at least one step");
    r.expect("goal");
    tr.goal = r.next_vector();
    for (std::int64_t i = 0; i <= T; ++i) {
        r.expect("s");
        tr.states.push_back(r.next_vector());
    }
    for (std::int64_t i = 0; i < T; ++i) {
        r.expect("a");
        tr.actions.push_back(r.next_vector());
    }
    for (std::int64_t i = 0; i <= T; ++i) {
        r.expect("m");
        tr.achieved.push_back(r.next_vector());
    }
    r.expect("end");
    tr.validate();
    return tr;
}

}  // namespace her
