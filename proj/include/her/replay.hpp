#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "her/envs.hpp"
#include "her/nncore.hpp"

namespace her {

/// Goal index value for transitions stored under the episode's own goal.
inline constexpr int kOriginalGoal = -1;
/// Goal index value for goals drawn from the whole buffer ("random" strategy).
inline constexpr int kPoolGoal = -2;

struct Transition {
    Vec state;
    Vec action;  // discrete actions hold the index in a length-1 vector
    double reward = 0.0;
    Vec next_state;
    Vec goal;
    Vec achieved;       // m(state)
    Vec achieved_next;  // m(next_state)
    double bonus = 0.0; // exploration bonus already included in `reward`
    std::int64_t episode_id = 0;
    int t = 0;
    int goal_source = kOriginalGoal;  // episode index i when goal = m(s_i)
};

/// Minibatch in matrix form: row i of every matrix belongs to the same transition.
struct Batch {
    Mat states;
    Mat actions;
    Vec rewards;
    Mat next_states;
    Mat goals;

    Eigen::Index size() const { return rewards.size(); }
};

Batch make_batch(std::span<const Transition> transitions);

/// One complete episode s_0..s_T with actions a_0..a_{T-1}.
struct EpisodeTrace {
    std::int64_t episode_id = 0;
    Vec goal;
    std::vector<Vec> states;
    std::vector<Vec> actions;
    std::vector<Vec> achieved;

    int horizon() const { return int(actions.size()); }
    /// Throws ShapeError when the sequence lengths are inconsistent.
    void validate() const;
};

/// Fixed-capacity FIFO ring of transitions with uniform sampling.
/// Fields are stored column-wise in flat arrays.
class ReplayBuffer {
public:
    ReplayBuffer(std::size_t capacity, int state_dim, int action_dim, int goal_dim);

    void push(const Transition& tr);

    std::size_t size() const { return size_; }
    std::size_t capacity() const { return capacity_; }
    std::uint64_t total_pushes() const { return pushes_; }
    int state_dim() const { return state_dim_; }
    int action_dim() const { return action_dim_; }
    int goal_dim() const { return goal_dim_; }

    /// Logical index: 0 is the oldest stored transition.
    Transition at(std::size_t i) const;

    /// `batch_size` uniform draws with replacement.
    std::vector<Transition> sample(std::size_t batch_size, Rng& rng) const;

    /// Same draws as `sample`, gathered straight into matrices.
    Batch sample_batch(std::size_t batch_size, Rng& rng) const;

    /// m(s') of a uniformly drawn stored transition.
    Vec sample_achieved_goal(Rng& rng) const;

private:
    Transition read_slot(std::size_t slot) const;

    std::size_t capacity_;
    int state_dim_, action_dim_, goal_dim_;
    std::size_t size_ = 0;
    std::size_t cursor_ = 0;
    std::uint64_t pushes_ = 0;

    std::vector<double> states_, actions_, next_states_, goals_, achieved_, achieved_next_;
    std::vector<double> rewards_, bonuses_;
    std::vector<std::int64_t> episode_ids_;
    std::vector<int> steps_, goal_sources_;
};

enum class StrategyKind { final, future, episode, random };

std::string_view to_string(StrategyKind k);
StrategyKind parse_strategy(std::string_view s);

struct StrategySpec {
    StrategyKind kind = StrategyKind::final;
    int k = 1;  // unused for final

    void validate() const;
    /// Number of relabeled copies stored per environment step.
    int goals_per_step() const { return kind == StrategyKind::final ? 1 : k; }
};

struct ReplayGoal {
    Vec goal;
    int source = kPoolGoal;  // episode index i with goal = m(s_i), or kPoolGoal
};

/// Goals used to replay transition t of `trace`:
///   final   -> m(s_T)
///   future  -> k uniform draws from m(s_{t+1}) .. m(s_T)
///   episode -> k uniform draws from m(s_0) .. m(s_T)
///   random  -> k achieved goals drawn uniformly from `pool`
std::vector<ReplayGoal> select_replay_goals(const EpisodeTrace& trace, int t, const StrategySpec& spec,
                                            const ReplayBuffer* pool, Rng& rng);

/// Stores every step of `trace` under its own goal and, when `strategy` is set,
/// once more per selected replay goal with the reward recomputed for that goal.
/// `bonuses`, when non-empty, holds one exploration bonus per step and is added to
/// the original-goal rewards only. Returns the number of transitions pushed.
std::size_t relabel_and_store(ReplayBuffer& buffer, const EpisodeTrace& trace,
                              const std::optional<StrategySpec>& strategy, const RewardFunction& reward_fn, Rng& rng,
                              std::span<const double> bonuses = {});

/// Number of stored transitions whose reward differs from reward_fn(...) + bonus.
std::size_t audit_rewards(const ReplayBuffer& buffer, const RewardFunction& reward_fn);

/// Versioned text dump of one episode ("her-trace 1").
void write_trace(std::ostream& os, const EpisodeTrace& trace);
EpisodeTrace read_trace(std::istream& is);

}  // namespace her
