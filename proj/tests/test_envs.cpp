#include <doctest.h>

#include <cmath>
#include <set>

#include "her/envs.hpp"
#include "her/errors.hpp"

using namespace her;

namespace {

Vec bits(std::initializer_list<double> v) {
    Vec x(Eigen::Index(v.size()));
    Eigen::Index i = 0;
    for (double b : v) x[i++] = b;
    return x;
}

Vec xy(double x, double y) {
    Vec v(2);
    v << x, y;
    return v;
}

Vec random_action(const Environment& env, Rng& rng) {
    const ActionSpace a = env.action_space();
    if (a.discrete()) {
        std::uniform_int_distribution<int> pick(0, a.n - 1);
        return Vec::Constant(1, pick(rng));
    }
    // Sample beyond the bounds as well so clipping is exercised.
    Vec v(a.dim());
    for (int i = 0; i < a.dim(); ++i) {
        std::uniform_real_distribution<double> u(1.5 * a.low[i], 1.5 * a.high[i]);
        v[i] = u(rng);
    }
    return v;
}

std::vector<std::unique_ptr<Environment>> all_envs() {
    std::vector<std::unique_ptr<Environment>> envs;
    envs.push_back(std::make_unique<BitFlip>(8));
    envs.push_back(std::make_unique<PointReach>());
    envs.push_back(std::make_unique<PuckSlide>());
    return envs;
}

}  // namespace

// ---------------------------------------------------------------- contract

TEST_CASE("contract: horizons and success modes") {
    CHECK(BitFlip(13).horizon() == 13);
    CHECK(BitFlip(13).success_mode() == SuccessMode::any_timestep);
    CHECK(PointReach().horizon() == 50);
    CHECK(PointReach().success_mode() == SuccessMode::final_state);
    CHECK(PuckSlide().horizon() == 50);
    CHECK(PuckSlide().success_mode() == SuccessMode::final_state);
    CHECK(BitFlip(4).tolerance() == 0.0);
    CHECK(PointReach().tolerance() == 0.05);
    CHECK(PuckSlide().tolerance() == 0.05);
    CHECK(BitFlip(4).action_space().discrete());
    CHECK(BitFlip(4).action_space().n == 4);
    CHECK(BitFlip(4).action_space().dim() == 1);
    CHECK(PuckSlide().action_space().dim() == 2);
    CHECK(PuckSlide().action_space().high[0] == 0.05);
}

TEST_CASE("contract: reset never yields a satisfied pair") {
    Rng rng(11);
    for (const auto& env : all_envs()) {
        for (int i = 0; i < 2000; ++i) {
            const EpisodeStart s = env->reset(rng);
            REQUIRE(s.state.size() == env->state_dim());
            REQUIRE(s.goal.size() == env->goal_dim());
            CHECK_FALSE(env->goal_satisfied(s.state, s.goal));
        }
    }
}

TEST_CASE("contract: achieved goal satisfies its own predicate on reachable states") {
    Rng rng(12);
    for (const auto& env : all_envs()) {
        int checked = 0;
        while (checked < 10000) {
            Vec s = env->reset(rng).state;
            for (int t = 0; t < env->horizon() && checked < 10000; ++t, ++checked) {
                s = env->step(s, random_action(*env, rng));
                REQUIRE(env->goal_satisfied(s, env->achieved_goal(s)));
            }
        }
    }
}

TEST_CASE("contract: step is deterministic and independent of the goal") {
    Rng rng(13);
    for (const auto& env : all_envs()) {
        for (int trial = 0; trial < 50; ++trial) {
            const EpisodeStart a = env->reset(rng);
            const Vec other_goal = env->sample_goal(rng);
            std::vector<Vec> actions;
            for (int t = 0; t < env->horizon(); ++t) actions.push_back(random_action(*env, rng));

            // Each episode runs the same actions while pursuing a different goal.
            auto run = [&](const Vec& goal) {
                std::vector<Vec> states{a.state};
                double total = 0;
                for (const Vec& act : actions) {
                    states.push_back(env->step(states.back(), act));
                    total += sparse_reward(env->achieved_goal(states.back()), goal, env->tolerance());
                }
                CHECK(std::isfinite(total));
                return states;
            };
            const auto s1 = run(a.goal);
            const auto s2 = run(other_goal);
            for (std::size_t t = 0; t < s1.size(); ++t) REQUIRE(s1[t] == s2[t]);
        }
    }
}

TEST_CASE("contract: same seed gives the same resets") {
    for (const auto& env : all_envs()) {
        Rng a(99), b(99);
        for (int i = 0; i < 100; ++i) {
            const EpisodeStart x = env->reset(a);
            const EpisodeStart y = env->reset(b);
            CHECK(x.state == y.state);
            CHECK(x.goal == y.goal);
        }
    }
}

// ---------------------------------------------------------------- BitFlip

TEST_CASE("bitflip: n outside [1, 64] is a configuration error") {
    CHECK_THROWS_AS(BitFlip(0), ConfigError);
    CHECK_THROWS_AS(BitFlip(65), ConfigError);
    CHECK_NOTHROW(BitFlip(1));
    CHECK_NOTHROW(BitFlip(64));
}

TEST_CASE("bitflip: n=1 only produces unsatisfied pairs") {
    BitFlip env(1);
    Rng rng(1);
    std::set<std::pair<double, double>> seen;
    for (int i = 0; i < 1000; ++i) {
        const EpisodeStart s = env.reset(rng);
        CHECK(s.state[0] != s.goal[0]);
        seen.insert({s.state[0], s.goal[0]});
    }
    CHECK(seen == std::set<std::pair<double, double>>{{0.0, 1.0}, {1.0, 0.0}});
}

TEST_CASE("bitflip: bit frequencies are uniform over 1e5 resets") {
    const int n = 8;
    BitFlip env(n);
    Rng rng(2);
    Vec state_ones = Vec::Zero(n), goal_ones = Vec::Zero(n);
    const int resets = 100000;
    for (int i = 0; i < resets; ++i) {
        const EpisodeStart s = env.reset(rng);
        state_ones += s.state;
        goal_ones += s.goal;
    }
    for (int i = 0; i < n; ++i) {
        CHECK(std::abs(state_ones[i] / resets - 0.5) <= 0.01);
        CHECK(std::abs(goal_ones[i] / resets - 0.5) <= 0.01);
    }
}

TEST_CASE("bitflip: action 0 flips the leftmost bit") {
    BitFlip env(3);
    const Vec next = env.step(bits({0, 0, 0}), Vec::Constant(1, 0));
    CHECK(BitFlip::to_string(next) == "100");
    CHECK(BitFlip::to_string(env.step(next, Vec::Constant(1, 2))) == "101");
}

TEST_CASE("bitflip: flipping is an involution that moves Hamming distance by one") {
    BitFlip env(10);
    Rng rng(3);
    for (int trial = 0; trial < 500; ++trial) {
        const EpisodeStart s = env.reset(rng);
        const Vec a = random_action(env, rng);
        const Vec next = env.step(s.state, a);
        CHECK(env.step(next, a) == s.state);
        CHECK((next - s.state).cwiseAbs().sum() == 1.0);
        const double before = (s.state - s.goal).cwiseAbs().sum();
        const double after = (next - s.goal).cwiseAbs().sum();
        CHECK(std::abs(after - before) == 1.0);
    }
}

TEST_CASE("bitflip: out-of-range actions are usage errors") {
    BitFlip env(4);
    const Vec s = Vec::Zero(4);
    CHECK_THROWS_AS(env.step(s, Vec::Constant(1, 4)), UsageError);
    CHECK_THROWS_AS(env.step(s, Vec::Constant(1, -1)), UsageError);
    CHECK_THROWS_AS(env.step(s, Vec::Constant(1, 1.5)), UsageError);
    CHECK_THROWS_AS(BitFlip::flip(s, 7), UsageError);
}

TEST_CASE("bitflip: every goal is reachable within n steps") {
    BitFlip env(12);
    Rng rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        const EpisodeStart st = env.reset(rng);
        Vec s = st.state;
        int steps = 0;
        for (int i = 0; i < 12; ++i)
            if (s[i] != st.goal[i]) {
                s = env.step(s, Vec::Constant(1, i));
                ++steps;
            }
        CHECK(steps <= env.horizon());
        CHECK(env.goal_satisfied(s, st.goal));
    }
}

TEST_CASE("bitflip: achieved goal is the identity") {
    const Vec s = bits({1, 0, 1, 1});
    CHECK(BitFlip(4).achieved_goal(s) == s);
}

// ---------------------------------------------------------------- PointReach

TEST_CASE("pointreach: zero action is a no-op") {
    PointReach env;
    CHECK(env.step(xy(0.3, -0.2), xy(0, 0)) == xy(0.3, -0.2));
}

TEST_CASE("pointreach: actions are clipped and the arena clamps") {
    PointReach env;
    CHECK(env.step(xy(0, 0), xy(1.0, -1.0)) == xy(0.05, -0.05));
    CHECK(env.step(xy(1.0, 0.5), xy(0.05, 0)) == xy(1.0, 0.5));
    CHECK(env.step(xy(-1.0, -1.0), xy(-0.05, -0.05)) == xy(-1.0, -1.0));
    CHECK(env.achieved_goal(xy(0.1, 0.2)) == xy(0.1, 0.2));
}

TEST_CASE("pointreach: greedy controller reaches any goal within the step bound") {
    PointReach env;
    Rng rng(5);
    for (int trial = 0; trial < 500; ++trial) {
        const EpisodeStart st = env.reset(rng);
        const int bound = int(std::ceil((st.goal - st.state).cwiseAbs().maxCoeff() / env.params().a_max));
        Vec p = st.state;
        int steps = 0;
        while ((st.goal - p).cwiseAbs().maxCoeff() > 1e-12 && steps <= bound) {
            p = env.step(p, st.goal - p);
            ++steps;
        }
        CHECK(steps <= bound);
        CHECK(env.goal_satisfied(p, st.goal));
    }
}

// ---------------------------------------------------------------- PuckSlide

TEST_CASE("puckslide: achieved goal is the puck position") {
    const Vec s = PuckSlide::make_state({0.1, 0.2}, {0.3, 0.4}, {0.5, 0.6});
    CHECK(PuckSlide().achieved_goal(s) == xy(0.3, 0.4));
}

TEST_CASE("puckslide: a resting puck without contact stays put") {
    PuckSlide env;
    Vec s = PuckSlide::make_state({0.5, 0.5}, {-0.3, 0.0}, {0, 0});
    for (int t = 0; t < 20; ++t) {
        s = env.step(s, xy(0.01, -0.02));
        CHECK(s.segment<2>(2) == xy(-0.3, 0.0));
        CHECK(s.segment<2>(4).isZero(0.0));
    }
}

TEST_CASE("puckslide: launched at speed 1 the puck slides 0.55 in 10 steps") {
    PuckSlide env;
    Vec s = PuckSlide::make_state({0.8, -0.9}, {0.0, -0.5}, {0.0, 1.0});
    for (int t = 1; t <= 10; ++t) {
        s = env.step(s, xy(0, 0));
        CHECK(std::abs(s[5] - (1.0 - 0.1 * t)) <= 1e-12);
        CHECK(s[4] == 0.0);
    }
    CHECK(s.segment<2>(4).isZero(0.0));
    CHECK(s[3] - -0.5 == doctest::Approx(0.55).epsilon(1e-12));
    const Vec rest = env.step(s, xy(0, 0));
    CHECK(rest == s);
}

TEST_CASE("puckslide: contact sets the puck velocity from the gripper step") {
    PuckSlide env;
    // Gripper 0.17 below the puck; the second upward step enters the contact radius.
    Vec s = PuckSlide::make_state({0.0, -0.65}, {0.0, -0.48}, {0, 0});
    s = env.step(s, xy(0, 0.05));
    CHECK(s.segment<2>(4).isZero(0.0));
    s = env.step(s, xy(0, 0.05));
    // v = 0.05 / 0.1 = 0.5, puck moves 0.05 then decays to 0.4; gripper halts at -0.58
    CHECK(std::abs(s[3] - -0.43) <= 1e-12);
    CHECK(std::abs(s[5] - 0.4) <= 1e-12);
    CHECK(std::abs(s[1] - -0.58) <= 1e-12);
}

TEST_CASE("puckslide: restitution 0 never moves the puck") {
    PuckSlideParams p;
    p.restitution = 0.0;
    PuckSlide env(p);
    Rng rng(6);
    for (int ep = 0; ep < 50; ++ep) {
        Vec s = env.reset(rng).state;
        const Vec puck = s.segment<2>(2);
        for (int t = 0; t < env.horizon(); ++t) {
            // Head for the puck so contacts actually happen.
            const Vec aim = s.segment<2>(2) - s.segment<2>(0) + 0.02 * random_action(env, rng);
            s = env.step(s, aim);
            REQUIRE(s.segment<2>(2) == puck);
        }
    }
}

TEST_CASE("puckslide: speed only increases at contact and the gripper never passes through") {
    PuckSlide env;
    const double r = env.params().contact_radius;
    Rng rng(7);
    int contacts = 0;
    for (int ep = 0; ep < 300; ++ep) {
        Vec s = env.reset(rng).state;
        for (int t = 0; t < env.horizon(); ++t) {
            const Vec aim = s.segment<2>(2) - s.segment<2>(0);
            const Vec a = (ep % 2 == 0) ? Vec(aim + 0.05 * random_action(env, rng)) : random_action(env, rng);
            const Vec next = env.step(s, a);
            const Eigen::Vector2d p = s.segment<2>(0), b = s.segment<2>(2);
            const Eigen::Vector2d p_free = (p + a.cwiseMax(-0.05).cwiseMin(0.05)).cwiseMax(-1.0).cwiseMin(1.0);
            const Eigen::Vector2d dp = p_free - p;
            if (next.segment<2>(4).norm() > s.segment<2>(4).norm()) {
                ++contacts;
                CHECK((p_free - b).norm() < r);
                CHECK(dp.dot(b - p) > 0.0);
            }
            const double gap_before = (p - b).norm();
            const double gap_after = (next.segment<2>(0) - b).norm();
            CHECK(gap_after >= std::min(r, gap_before) - 1e-12);
            s = next;
        }
    }
    CHECK(contacts > 50);
}

TEST_CASE("puckslide: any launched puck stops without further contact") {
    PuckSlide env;
    Rng rng(8);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::Vector2d v(u(rng), u(rng));
        Vec s = PuckSlide::make_state({0.9, 0.9}, {0.0, 0.0}, v);
        const int needed = int(std::ceil(v.norm() / 0.1)) + 1;
        double last = v.norm();
        for (int t = 0; t < needed; ++t) {
            s = env.step(s, xy(0, 0));
            CHECK(s.segment<2>(4).norm() <= last);
            last = s.segment<2>(4).norm();
        }
        CHECK(last == 0.0);
    }
}

TEST_CASE("puckslide: goals lie on the ring above the start region") {
    PuckSlide env;
    Rng rng(9);
    const auto& p = env.params();
    for (int i = 0; i < 5000; ++i) {
        const Vec g = env.sample_goal(rng);
        const Eigen::Vector2d rel(g[0], g[1] - p.start_y);
        CHECK(rel.norm() >= p.goal_min - 1e-12);
        CHECK(rel.norm() <= p.goal_max + 1e-12);
        CHECK(std::abs(std::atan2(rel.x(), rel.y())) <= p.goal_spread + 1e-12);
        CHECK(g.cwiseAbs().maxCoeff() <= p.half_width);
    }
}

TEST_CASE("puckslide: inconsistent geometry is rejected") {
    PuckSlideParams p;
    p.goal_max = 2.0;
    CHECK_THROWS_AS(PuckSlide{p}, ConfigError);
    PuckSlideParams q;
    q.gripper_y = -0.45;
    CHECK_THROWS_AS(PuckSlide{q}, ConfigError);
}

// ---------------------------------------------------------------- registry

TEST_CASE("registry: names, overrides and errors") {
    CHECK(env_names() == std::vector<std::string>{"bitflip", "pointreach", "puckslide"});
    CHECK(make_env("bitflip")->state_dim() == 20);
    CHECK(make_env("bitflip", {{"n", 7}})->state_dim() == 7);
    auto ps = make_env("puckslide", {{"friction", 0.5}, {"horizon", 30}});
    CHECK(ps->horizon() == 30);
    CHECK(dynamic_cast<PuckSlide&>(*ps).params().friction == 0.5);
    CHECK_THROWS_AS(make_env("cartpole"), ConfigError);
    CHECK_THROWS_AS(make_env("bitflip", {{"n", 2.5}}), ConfigError);
    CHECK_THROWS_AS(make_env("bitflip", {{"n", 70}}), ConfigError);
    CHECK_THROWS_AS(make_env("pointreach", {{"width", 2}}), ConfigError);
    auto clone = ps->clone();
    CHECK(clone->parameters() == ps->parameters());
}

// ---------------------------------------------------------------- rewards

TEST_CASE("sparse: bitflip rewards 0 on the goal and -1 elsewhere") {
    BitFlip env(3);
    RewardFunction r(env, {});
    const Vec g = bits({1, 0, 1});
    CHECK(r(bits({0, 0, 1}), g, g) == 0.0);
    CHECK(r(g, bits({0, 0, 1}), g) == -1.0);
    CHECK(r.min_reward() == -1.0);
    CHECK(r.max_reward() == 0.0);
}

TEST_CASE("sparse: distance exactly at tolerance counts as success") {
    CHECK(sparse_reward(xy(0.0, 0.0), xy(0.05, 0.0), 0.05) == 0.0);
    CHECK(sparse_reward(xy(0.0, 0.0), xy(0.0500001, 0.0), 0.05) == -1.0);
}

TEST_CASE("sparse: values are always 0 or -1") {
    PuckSlide env;
    RewardFunction r(env, {});
    Rng rng(10);
    for (int ep = 0; ep < 50; ++ep) {
        const EpisodeStart st = env.reset(rng);
        Vec s = st.state;
        for (int t = 0; t < env.horizon(); ++t) {
            const Vec next = env.step(s, random_action(env, rng));
            const double v = r(env.achieved_goal(s), env.achieved_goal(next), st.goal);
            CHECK((v == 0.0 || v == -1.0));
            s = next;
        }
    }
}

TEST_CASE("shaped: worked examples") {
    const Vec g = xy(0, 0);
    CHECK(shaped_reward(xy(2, 0), xy(0, 1), g, {RewardKind::shaped, 1.0, 1.0}) == 1.0);
    CHECK(shaped_reward(xy(2, 0), xy(0.5, 0), g, {RewardKind::shaped, 0.0, 2.0}) == -0.25);
    CHECK(shaped_reward(xy(0.6, 0.8), g, g, {RewardKind::shaped, 1.0, 2.0}) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(shaped_reward(xy(0.6, 0.8), g, g, {RewardKind::shaped, 1.0, 1.0}) == 1.0);
}

TEST_CASE("shaped: rejected on bitflip and for unsupported hyperparameters") {
    CHECK_THROWS_AS(RewardFunction(BitFlip(5), {RewardKind::shaped, 0.0, 1.0}), ConfigError);
    CHECK_THROWS_AS(RewardFunction(PuckSlide(), {RewardKind::shaped, 0.5, 1.0}), ConfigError);
    CHECK_THROWS_AS(RewardFunction(PuckSlide(), {RewardKind::shaped, 0.0, 3.0}), ConfigError);
    CHECK_THROWS_AS(parse_reward_kind("dense"), ConfigError);
    CHECK(parse_reward_kind("shaped") == RewardKind::shaped);
}

TEST_CASE("shaped: reward stays within the function's declared bounds") {
    for (RewardSpec spec : {RewardSpec{RewardKind::shaped, 0.0, 1.0}, RewardSpec{RewardKind::shaped, 1.0, 2.0}}) {
        PuckSlide env;
        RewardFunction r(env, spec);
        Rng rng(14);
        for (int ep = 0; ep < 30; ++ep) {
            const EpisodeStart st = env.reset(rng);
            Vec s = st.state;
            for (int t = 0; t < env.horizon(); ++t) {
                const Vec next = env.step(s, random_action(env, rng));
                const double v = r(env.achieved_goal(s), env.achieved_goal(next), st.goal);
                CHECK(std::isfinite(v));
                CHECK(v >= r.min_reward());
                CHECK(v <= r.max_reward());
                s = next;
            }
        }
    }
}
