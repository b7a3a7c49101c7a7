#pragma once

#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "her/nncore.hpp"

namespace her {

enum class SuccessMode { any_timestep, final_state };

struct ActionSpace {
    enum class Kind { discrete, box };
    Kind kind = Kind::discrete;
    int n = 0;  // number of discrete actions
    Vec low;    // box bounds
    Vec high;

    bool discrete() const { return kind == Kind::discrete; }
    /// Width of an action vector: 1 for discrete (the index), box dimension otherwise.
    int dim() const { return discrete() ? 1 : int(low.size()); }

    static ActionSpace make_discrete(int n);
    static ActionSpace make_box(Vec low, Vec high);
};

struct EpisodeStart {
    Vec state;
    Vec goal;
};

/// Multi-goal environment. Dynamics are a pure function of (state, action);
/// the goal never enters `step`. Every goal g has the predicate
/// f_g(s) = [|achieved_goal(s) - g| <= tolerance()].
class Environment {
public:
    virtual ~Environment() = default;

    virtual std::string name() const = 0;
    virtual int state_dim() const = 0;
    virtual int goal_dim() const = 0;
    virtual ActionSpace action_space() const = 0;
    virtual int horizon() const = 0;
    virtual SuccessMode success_mode() const = 0;
    virtual double tolerance() const = 0;
    /// True when goals are Euclidean object positions (shaped rewards are defined).
    virtual bool continuous() const = 0;
    /// Upper bound on |achieved_goal(s) - g| over reachable states and goals.
    virtual double max_goal_distance() const = 0;

    virtual Vec achieved_goal(const Vec& state) const = 0;
    virtual Vec step(const Vec& state, const Vec& action) const = 0;
    virtual Vec sample_initial_state(Rng& rng) const = 0;
    virtual Vec sample_goal(Rng& rng) const = 0;

    virtual std::unique_ptr<Environment> clone() const = 0;
    /// Resolved parameters, for manifests.
    virtual std::vector<std::pair<std::string, double>> parameters() const = 0;

    bool goal_satisfied(const Vec& state, const Vec& goal) const;

    /// Samples (s0, g) until the goal is not already satisfied.
    EpisodeStart reset(Rng& rng) const;
    /// Samples s0 for a fixed goal until the goal is not already satisfied.
    Vec reset_with_goal(const Vec& goal, Rng& rng) const;
};

/// n-bit flipping task. Action i toggles bit i; position 0 prints leftmost.
class BitFlip final : public Environment {
public:
    explicit BitFlip(int n);

    int bits() const { return n_; }

    std::string name() const override { return "bitflip"; }
    int state_dim() const override { return n_; }
    int goal_dim() const override { return n_; }
    ActionSpace action_space() const override { return ActionSpace::make_discrete(n_); }
    int horizon() const override { return n_; }
    SuccessMode success_mode() const override { return SuccessMode::any_timestep; }
    double tolerance() const override { return 0.0; }
    bool continuous() const override { return false; }
    double max_goal_distance() const override;

    Vec achieved_goal(const Vec& state) const override { return state; }
    Vec step(const Vec& state, const Vec& action) const override;
    Vec sample_initial_state(Rng& rng) const override;
    Vec sample_goal(Rng& rng) const override;

    std::unique_ptr<Environment> clone() const override { return std::make_unique<BitFlip>(*this); }
    std::vector<std::pair<std::string, double>> parameters() const override;

    static Vec flip(const Vec& state, int bit);
    static std::string to_string(const Vec& bits);

private:
    int n_;
};

struct PointReachParams {
    double half_width = 1.0;
    double a_max = 0.05;
    double tolerance = 0.05;
    double start_half_width = 0.5;
    int horizon = 50;
};

/// Point mass moved by bounded relative displacements inside a square arena.
/// State = position (x, y); achieved goal = position.
class PointReach final : public Environment {
public:
    explicit PointReach(PointReachParams params = {});

    const PointReachParams& params() const { return p_; }

    std::string name() const override { return "pointreach"; }
    int state_dim() const override { return 2; }
    int goal_dim() const override { return 2; }
    ActionSpace action_space() const override;
    int horizon() const override { return p_.horizon; }
    SuccessMode success_mode() const override { return SuccessMode::final_state; }
    double tolerance() const override { return p_.tolerance; }
    bool continuous() const override { return true; }
    double max_goal_distance() const override;

    Vec achieved_goal(const Vec& state) const override { return state; }
    Vec step(const Vec& state, const Vec& action) const override;
    Vec sample_initial_state(Rng& rng) const override;
    Vec sample_goal(Rng& rng) const override;

    std::unique_ptr<Environment> clone() const override { return std::make_unique<PointReach>(*this); }
    std::vector<std::pair<std::string, double>> parameters() const override;

private:
    PointReachParams p_;
};

struct PuckSlideParams {
    double half_width = 1.0;
    double a_max = 0.05;
    double contact_radius = 0.1;
    double restitution = 1.0;
    double friction = 1.0;  // speed lost per second
    double dt = 0.1;
    double goal_min = 0.5;
    double goal_max = 0.9;
    double goal_spread = 0.7853981633974483;  // half-angle of the goal sector around +y
    double tolerance = 0.05;
    double start_half_width = 0.1;  // puck start square half-size
    double start_y = -0.4;          // puck start square center (x = 0)
    double gripper_y = -0.65;       // fixed gripper start (x = 0)
    int horizon = 50;
};

/// Planar gripper that strikes a puck which then slides and decelerates by friction.
/// State = (gripper x, y, puck x, y, puck vx, vy); achieved goal = puck position.
class PuckSlide final : public Environment {
public:
    explicit PuckSlide(PuckSlideParams params = {});

    const PuckSlideParams& params() const { return p_; }

    std::string name() const override { return "puckslide"; }
    int state_dim() const override { return 6; }
    int goal_dim() const override { return 2; }
    ActionSpace action_space() const override;
    int horizon() const override { return p_.horizon; }
    SuccessMode success_mode() const override { return SuccessMode::final_state; }
    double tolerance() const override { return p_.tolerance; }
    bool continuous() const override { return true; }
    double max_goal_distance() const override;

    Vec achieved_goal(const Vec& state) const override { return state.segment<2>(2); }
    Vec step(const Vec& state, const Vec& action) const override;
    Vec sample_initial_state(Rng& rng) const override;
    Vec sample_goal(Rng& rng) const override;

    std::unique_ptr<Environment> clone() const override { return std::make_unique<PuckSlide>(*this); }
    std::vector<std::pair<std::string, double>> parameters() const override;

    static Vec make_state(const Eigen::Vector2d& gripper, const Eigen::Vector2d& puck,
                          const Eigen::Vector2d& velocity);

private:
    PuckSlideParams p_;
};

/// Name-keyed construction with numeric parameter overrides
/// ("bitflip": n; "pointreach"/"puckslide": any field of their params struct).
std::unique_ptr<Environment> make_env(std::string_view name, const std::map<std::string, double>& overrides = {});
std::vector<std::string> env_names();

// ---------------------------------------------------------------- rewards

enum class RewardKind { sparse, shaped };

std::string_view to_string(RewardKind k);
RewardKind parse_reward_kind(std::string_view s);

struct RewardSpec {
    RewardKind kind = RewardKind::sparse;
    double lambda = 0.0;  // {0, 1}
    double p = 1.0;       // {1, 2}
};

/// 0 if |achieved_next - goal| <= tolerance, else -1.
double sparse_reward(const Vec& achieved_next, const Vec& goal, double tolerance);

/// lambda * |goal - achieved|^p - |goal - achieved_next|^p
double shaped_reward(const Vec& achieved, const Vec& achieved_next, const Vec& goal, const RewardSpec& spec);

/// Reward r(s, a, g) expressed through the achieved goals of s and s', so it can
/// be recomputed from stored transitions without the environment.
class RewardFunction {
public:
    RewardFunction(const Environment& env, RewardSpec spec);

    double operator()(const Vec& achieved, const Vec& achieved_next, const Vec& goal) const;

    const RewardSpec& spec() const { return spec_; }
    double tolerance() const { return tolerance_; }
    /// Smallest and largest reward this function can return.
    double min_reward() const { return min_; }
    double max_reward() const { return max_; }

private:
    RewardSpec spec_;
    double tolerance_;
    double min_;
    double max_;
};

}  // namespace her
