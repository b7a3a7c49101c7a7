#include "her/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "her/errors.hpp"

namespace her {

namespace {

constexpr int kMaxResetAttempts = 100000;

Eigen::Vector2d clamp_box(const Eigen::Vector2d& x, double half_width) {
    return x.cwiseMax(-half_width).cwiseMin(half_width);
}

Eigen::Vector2d clip_action(const Vec& action, double a_max) {
    if (action.size() != 2) throw ShapeError("expected a 2-dimensional action");
    return Eigen::Vector2d(action[0], action[1]).cwiseMax(-a_max).cwiseMin(a_max);
}

double take(std::map<std::string, double>& m, const std::string& key, double fallback) {
    auto it = m.find(key);
    if (it == m.end()) return fallback;
    double v = it->second;
    m.erase(it);
    return v;
}

void reject_leftovers(const std::map<std::string, double>& m, std::string_view env) {
    if (!m.empty())
        throw ConfigError("unknown parameter '" + m.begin()->first + "' for environment " + std::string(env));
}

}  // namespace

ActionSpace ActionSpace::make_discrete(int n) {
    ActionSpace s;
    s.kind = Kind::discrete;
    s.n = n;
    return s;
}

ActionSpace ActionSpace::make_box(Vec low, Vec high) {
    ActionSpace s;
    s.kind = Kind::box;
    s.low = std::move(low);
    s.high = std::move(high);
    return s;
}

bool Environment::goal_satisfied(const Vec& state, const Vec& goal) const {
    return (achieved_goal(state) - goal).norm() <= tolerance();
}

EpisodeStart Environment::reset(Rng& rng) const {
    for (int i = 0; i < kMaxResetAttempts; ++i) {
        EpisodeStart s{sample_initial_state(rng), sample_goal(rng)};
        if (!goal_satisfied(s.state, s.goal)) return s;
    }
    throw ConfigError(name() + ": could not sample an unsatisfied initial state-goal pair");
}

Vec Environment::reset_with_goal(const Vec& goal, Rng& rng) const {
    if (goal.size() != goal_dim()) throw ShapeError("goal has the wrong dimension");
    for (int i = 0; i < kMaxResetAttempts; ++i) {
        Vec s = sample_initial_state(rng);
        if (!goal_satisfied(s, goal)) return s;
    }
    throw ConfigError(name() + ": goal is satisfied by every sampled initial state");
}

// ---------------------------------------------------------------- BitFlip

BitFlip::BitFlip(int n) : n_(n) {
    if (n < 1 || n > 64) throw ConfigError("bitflip: n must lie in [1, 64], got " + std::to_string(n));
}

double BitFlip::max_goal_distance() const { return std::sqrt(double(n_)); }

Vec BitFlip::flip(const Vec& state, int bit) {
    if (bit < 0 || bit >= state.size())
        throw UsageError("bitflip: action " + std::to_string(bit) + " out of range");
    Vec next = state;
    next[bit] = 1.0 - next[bit];
    return next;
}

Vec BitFlip::step(const Vec& state, const Vec& action) const {
    if (state.size() != n_) throw ShapeError("bitflip: state has the wrong length");
    if (action.size() != 1) throw ShapeError("bitflip: action must be a single index");
    const double a = action[0];
    if (a != std::floor(a) || a < 0 || a >= n_)
        throw UsageError("bitflip: action " + std::to_string(a) + " out of range");
    return flip(state, int(a));
}

Vec BitFlip::sample_initial_state(Rng& rng) const {
    std::bernoulli_distribution coin(0.5);
    Vec s(n_);
    for (int i = 0; i < n_; ++i) s[i] = coin(rng) ? 1.0 : 0.0;
    return s;
}

Vec BitFlip::sample_goal(Rng& rng) const { return sample_initial_state(rng); }

std::vector<std::pair<std::string, double>> BitFlip::parameters() const { return {{"n", double(n_)}}; }

std::string BitFlip::to_string(const Vec& bits) {
    std::string s;
    for (Eigen::Index i = 0; i < bits.size(); ++i) s += bits[i] != 0.0 ? '1' : '0';
    return s;
}

// ---------------------------------------------------------------- PointReach

PointReach::PointReach(PointReachParams params) : p_(params) {
    if (!(p_.half_width > 0) || !(p_.a_max > 0) || p_.tolerance < 0 || p_.horizon < 1 ||
        !(p_.start_half_width > 0) || p_.start_half_width > p_.half_width)
        throw ConfigError("pointreach: invalid parameters");
}

ActionSpace PointReach::action_space() const {
    return ActionSpace::make_box(Vec::Constant(2, -p_.a_max), Vec::Constant(2, p_.a_max));
}

double PointReach::max_goal_distance() const { return 2.0 * std::sqrt(2.0) * p_.half_width; }

Vec PointReach::step(const Vec& state, const Vec& action) const {
    if (state.size() != 2) throw ShapeError("pointreach: state has the wrong length");
    Eigen::Vector2d p(state[0], state[1]);
    Eigen::Vector2d next = clamp_box(p + clip_action(action, p_.a_max), p_.half_width);
    return Vec(next);
}

Vec PointReach::sample_initial_state(Rng& rng) const {
    std::uniform_real_distribution<double> u(-p_.start_half_width, p_.start_half_width);
    Vec s(2);
    s[0] = u(rng);
    s[1] = u(rng);
    return s;
}

Vec PointReach::sample_goal(Rng& rng) const {
    std::uniform_real_distribution<double> u(-p_.half_width, p_.half_width);
    Vec g(2);
    g[0] = u(rng);
    g[1] = u(rng);
    return g;
}

std::vector<std::pair<std::string, double>> PointReach::parameters() const {
    return {{"half_width", p_.half_width},
            {"a_max", p_.a_max},
            {"tolerance", p_.tolerance},
            {"start_half_width", p_.start_half_width},
            {"horizon", double(p_.horizon)}};
}

// ---------------------------------------------------------------- PuckSlide

PuckSlide::PuckSlide(PuckSlideParams params) : p_(params) {
    const bool ok = p_.half_width > 0 && p_.a_max > 0 && p_.contact_radius > 0 && p_.restitution >= 0 &&
                    p_.friction >= 0 && p_.dt > 0 && p_.goal_min >= 0 && p_.goal_max >= p_.goal_min &&
                    p_.goal_spread >= 0 && p_.tolerance >= 0 && p_.start_half_width >= 0 && p_.horizon >= 1;
    if (!ok) throw ConfigError("puckslide: invalid parameters");
    const double far_y = p_.start_y + p_.goal_max;
    const double far_x = p_.goal_max * std::sin(std::min(p_.goal_spread, std::numbers::pi / 2));
    if (far_y > p_.half_width || far_x > p_.half_width || std::abs(p_.gripper_y) > p_.half_width ||
        std::abs(p_.start_y) + p_.start_half_width > p_.half_width)
        throw ConfigError("puckslide: start region or goal ring does not fit in the arena");
    if (p_.start_y - p_.start_half_width - p_.gripper_y <= p_.contact_radius)
        throw ConfigError("puckslide: gripper starts in contact with the puck region");
}

ActionSpace PuckSlide::action_space() const {
    return ActionSpace::make_box(Vec::Constant(2, -p_.a_max), Vec::Constant(2, p_.a_max));
}

double PuckSlide::max_goal_distance() const { return 2.0 * std::sqrt(2.0) * p_.half_width; }

Vec PuckSlide::make_state(const Eigen::Vector2d& gripper, const Eigen::Vector2d& puck,
                          const Eigen::Vector2d& velocity) {
    Vec s(6);
    s << gripper, puck, velocity;
    return s;
}

Vec PuckSlide::step(const Vec& state, const Vec& action) const {
    if (state.size() != 6) throw ShapeError("puckslide: state has the wrong length");
    const Eigen::Vector2d p = state.segment<2>(0);
    Eigen::Vector2d b = state.segment<2>(2);
    Eigen::Vector2d v = state.segment<2>(4);
    Eigen::Vector2d p_next = clamp_box(p + clip_action(action, p_.a_max), p_.half_width);
    // Displacement after the wall clamp; the raw action can point away from the
    // puck while the clamped motion still approaches it.
    const Eigen::Vector2d dp = p_next - p;
    const double r = p_.contact_radius;
    const bool toward = dp.dot(b - p) > 0.0;
    if ((p_next - b).norm() < r && toward) {
        v = p_.restitution * dp / p_.dt;
        // The gripper stops where its path first reaches the contact radius.
        const Eigen::Vector2d d = p - b;
        const double qa = dp.squaredNorm();
        const double qb = 2.0 * d.dot(dp);
        const double qc = d.squaredNorm() - r * r;
        double s = 0.0;
        if (qc > 0.0 && qa > 0.0) {
            const double disc = std::max(0.0, qb * qb - 4.0 * qa * qc);
            s = std::clamp((-qb - std::sqrt(disc)) / (2.0 * qa), 0.0, 1.0);
        }
        p_next = p + s * dp;
    }

    b += v * p_.dt;
    for (int i = 0; i < 2; ++i) {
        if (b[i] > p_.half_width || b[i] < -p_.half_width) {
            b[i] = std::clamp(b[i], -p_.half_width, p_.half_width);
            v[i] = 0.0;
        }
    }
    const double speed = v.norm();
    if (speed > 0.0) {
        const double slowed = speed - p_.friction * p_.dt;
        // Sub-1e-12 remainders come from rounding in repeated decrements.
        v = slowed > 1e-12 ? Eigen::Vector2d(v * (slowed / speed)) : Eigen::Vector2d::Zero();
    }
    return make_state(p_next, b, v);
}

Vec PuckSlide::sample_initial_state(Rng& rng) const {
    std::uniform_real_distribution<double> u(-p_.start_half_width, p_.start_half_width);
    const double bx = u(rng);
    const double by = p_.start_y + u(rng);
    return make_state({0.0, p_.gripper_y}, {bx, by}, {0.0, 0.0});
}

Vec PuckSlide::sample_goal(Rng& rng) const {
    std::uniform_real_distribution<double> dist(p_.goal_min, p_.goal_max);
    std::uniform_real_distribution<double> angle(-p_.goal_spread, p_.goal_spread);
    const double d = dist(rng);
    const double a = angle(rng);
    Vec g(2);
    g[0] = d * std::sin(a);
    g[1] = p_.start_y + d * std::cos(a);
    return g;
}

std::vector<std::pair<std::string, double>> PuckSlide::parameters() const {
    return {{"half_width", p_.half_width},
            {"a_max", p_.a_max},
            {"contact_radius", p_.contact_radius},
            {"restitution", p_.restitution},
            {"friction", p_.friction},
            {"dt", p_.dt},
            {"goal_min", p_.goal_min},
            {"goal_max", p_.goal_max},
            {"goal_spread", p_.goal_spread},
            {"tolerance", p_.tolerance},
            {"start_half_width", p_.start_half_width},
            {"start_y", p_.start_y},
            {"gripper_y", p_.gripper_y},
            {"horizon", double(p_.horizon)}};
}

// ---------------------------------------------------------------- registry

std::vector<std::string> env_names() { return {"bitflip", "pointreach", "puckslide"}; }

std::unique_ptr<Environment> make_env(std::string_view name, const std::map<std::string, double>& overrides) {
    auto m = overrides;
    if (name == "bitflip") {
        const double n = take(m, "n", 20);
        reject_leftovers(m, name);
        if (n != std::floor(n)) throw ConfigError("bitflip: n must be an integer");
        return std::make_unique<BitFlip>(int(n));
    }
    if (name == "pointreach") {
        PointReachParams p;
        p.half_width = take(m, "half_width", p.half_width);
        p.a_max = take(m, "a_max", p.a_max);
        p.tolerance = take(m, "tolerance", p.tolerance);
        p.start_half_width = take(m, "start_half_width", p.start_half_width);
        p.horizon = int(take(m, "horizon", p.horizon));
        reject_leftovers(m, name);
        return std::make_unique<PointReach>(p);
    }
    if (name == "puckslide") {
        PuckSlideParams p;
        p.half_width = take(m, "half_width", p.half_width);
        p.a_max = take(m, "a_max", p.a_max);
        p.contact_radius = take(m, "contact_radius", p.contact_radius);
        p.restitution = take(m, "restitution", p.restitution);
        p.friction = take(m, "friction", p.friction);
        p.dt = take(m, "dt", p.dt);
        p.goal_min = take(m, "goal_min", p.goal_min);
        p.goal_max = take(m, "goal_max", p.goal_max);
        p.goal_spread = take(m, "goal_spread", p.goal_spread);
        p.tolerance = take(m, "tolerance", p.tolerance);
        p.start_half_width = take(m, "start_half_width", p.start_half_width);
        p.start_y = take(m, "start_y", p.start_y);
        p.gripper_y = take(m, "gripper_y", p.gripper_y);
        p.horizon = int(take(m, "horizon", p.horizon));
        reject_leftovers(m, name);
        return std::make_unique<PuckSlide>(p);
    }
    throw ConfigError("unknown environment '" + std::string(name) + "'");
}

// ---------------------------------------------------------------- rewards

std::string_view to_string(RewardKind k) { return k == RewardKind::sparse ? "sparse" : "shaped"; }

RewardKind parse_reward_kind(std::string_view s) {
    if (s == "sparse") return RewardKind::sparse;
    if (s == "shaped") return RewardKind::shaped;
    throw ConfigError("unknown reward kind '" + std::string(s) + "'");
}

double sparse_reward(const Vec& achieved_next, const Vec& goal, double tolerance) {
    if (achieved_next.size() != goal.size()) throw ShapeError("reward: goal dimension mismatch");
    return (achieved_next - goal).norm() <= tolerance ? 0.0 : -1.0;
}

double shaped_reward(const Vec& achieved, const Vec& achieved_next, const Vec& goal, const RewardSpec& spec) {
    if (achieved.size() != goal.size() || achieved_next.size() != goal.size())
        throw ShapeError("reward: goal dimension mismatch");
    const double before = std::pow((goal - achieved).norm(), spec.p);
    const double after = std::pow((goal - achieved_next).norm(), spec.p);
    return spec.lambda * before - after;
}

RewardFunction::RewardFunction(const Environment& env, RewardSpec spec)
    : spec_(spec), tolerance_(env.tolerance()) {
    if (spec_.kind == RewardKind::sparse) {
        min_ = -1.0;
        max_ = 0.0;
        return;
    }
    if (!env.continuous()) throw ConfigError("shaped rewards are not defined for " + env.name());
    if (spec_.lambda != 0.0 && spec_.lambda != 1.0) throw ConfigError("shaped reward lambda must be 0 or 1");
    if (spec_.p != 1.0 && spec_.p != 2.0) throw ConfigError("shaped reward p must be 1 or 2");
    const double span = std::pow(env.max_goal_distance(), spec_.p);
    min_ = -span;
    max_ = spec_.lambda * span;
}

double RewardFunction::operator()(const Vec& achieved, const Vec& achieved_next, const Vec& goal) const {
    if (spec_.kind == RewardKind::sparse) return sparse_reward(achieved_next, goal, tolerance_);
    return shaped_reward(achieved, achieved_next, goal, spec_);
}

}  // namespace her
