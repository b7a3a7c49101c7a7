#include <doctest.h>

#include <cmath>
#include <set>

#include "her/errors.hpp"
#include "her/trainer.hpp"

using namespace her;

namespace {

TrainConfig tiny_config() {
    TrainConfig c;
    c.epochs = 2;
    c.cycles_per_epoch = 3;
    c.episodes_per_cycle = 2;
    c.optimization_steps = 2;
    c.batch_size = 8;
    c.buffer_capacity = 10000;
    c.eval_episodes = 5;
    c.strategy = {StrategyKind::future, 2};
    c.seed = 17;
    return c;
}

AgentConfig small_agent() {
    AgentConfig a;
    a.hidden = {16};
    return a;
}

std::unique_ptr<DqnAgent> agent_with_params(double value) {
    auto a = std::make_unique<DqnAgent>(BitFlip(2), small_agent(), 1);
    for (Network* n : a->networks()) n->params().setConstant(value);
    for (AdamState* s : a->optimizers()) s->m.setConstant(value);
    return a;
}

bool same_params(const Agent& a, const Agent& b) {
    for (std::size_t i = 0; i < a.networks().size(); ++i)
        if (a.networks()[i]->params() != b.networks()[i]->params()) return false;
    return true;
}

}  // namespace

// ---------------------------------------------------------------- config

TEST_CASE("config: paper defaults") {
    const TrainConfig c;
    CHECK(c.epochs == 200);
    CHECK(c.cycles_per_epoch == 50);
    CHECK(c.episodes_per_cycle == 16);
    CHECK(c.optimization_steps == 40);
    CHECK(c.batch_size == 128);
    CHECK(c.buffer_capacity == 1000000);
    CHECK(c.gamma == 0.98);
    CHECK(c.polyak_decay == 0.95);
    CHECK(c.workers == 1);
    CHECK(c.sync == SyncMode::step);
    CHECK(c.eval_episodes == 100);
    CHECK_FALSE(c.single_goal);
}

TEST_CASE("config: validation") {
    TrainConfig c = tiny_config();
    CHECK_NOTHROW(c.validate());
    c.epochs = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny_config();
    c.gamma = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny_config();
    c.strategy.k = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.her = false;
    CHECK_NOTHROW(c.validate());
    c = tiny_config();
    c.workers = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK(parse_sync_mode("cycle") == SyncMode::cycle);
    CHECK_THROWS_AS(parse_sync_mode("never"), ConfigError);
}

TEST_CASE("config: target clip includes the exploration bonus") {
    TrainConfig c = tiny_config();
    const RewardFunction sparse(BitFlip(3), {});
    TargetClip clip = target_clip_for(c, sparse);
    CHECK(clip.low == doctest::Approx(-50.0).epsilon(1e-12));
    CHECK(clip.high == 0.0);
    c.count_based = true;
    c.alpha = 0.5;
    clip = target_clip_for(c, sparse);
    CHECK(clip.high == doctest::Approx(25.0).epsilon(1e-12));
}

TEST_CASE("config: agent and environment must match") {
    CHECK_THROWS_AS(run_training(tiny_config(), PuckSlide(), AgentKind::dqn, small_agent()), ConfigError);
    CHECK_THROWS_AS(run_training(tiny_config(), BitFlip(4), AgentKind::ddpg, small_agent()), ConfigError);
}

TEST_CASE("metrics: csv header and row format") {
    CHECK(metrics_csv_header() ==
          "epoch,env_steps,train_success,eval_success,mean_return,mean_q,critic_loss,wallclock_s,worker_id");
    MetricsRow r;
    r.epoch = 3;
    r.env_steps = 1280;
    r.train_success = 0.25;
    r.eval_success = 0.5;
    r.mean_return = -12.5;
    r.mean_q = -3.0;
    r.critic_loss = 0.1;
    r.worker_id = 2;
    CHECK(format_metrics_row(r) == "3,1280,0.25,0.5,-12.5,-3,0.1,0,2");
}

// ---------------------------------------------------------------- worker sync

TEST_CASE("sync: two workers at 0 and 2 both end at 1") {
    auto a = agent_with_params(0.0);
    auto b = agent_with_params(2.0);
    std::vector<Agent*> agents{a.get(), b.get()};
    worker_sync(agents, false);
    for (Agent* x : agents)
        for (Network* n : x->networks()) CHECK((n->params().array() == 1.0).all());
    // Adam moments stay per worker unless requested.
    CHECK((a->optimizers()[0]->m.array() == 0.0).all());
    CHECK((b->optimizers()[0]->m.array() == 2.0).all());
    worker_sync(agents, true);
    CHECK((a->optimizers()[0]->m.array() == 1.0).all());
    CHECK((b->optimizers()[0]->m.array() == 1.0).all());
}

TEST_CASE("sync: identical workers are unchanged and one worker is a no-op") {
    for (int W : {1, 2, 3, 8}) {
        std::vector<std::unique_ptr<Agent>> owned;
        std::vector<Agent*> agents;
        const auto proto = make_agent(AgentKind::ddpg, PuckSlide(), small_agent(), 5);
        for (int w = 0; w < W; ++w) {
            owned.push_back(proto->clone());
            agents.push_back(owned.back().get());
        }
        worker_sync(agents, true);
        for (Agent* a : agents) CHECK(same_params(*a, *proto));
    }
}

TEST_CASE("sync: pending observations fold into one shared normalizer") {
    auto a = agent_with_params(0.0);
    auto b = agent_with_params(0.0);
    RunningNormalizer shared(4), pa(4), pb(4), expect(4);
    Mat xa = Mat::Random(5, 4), xb = Mat::Random(3, 4);
    pa.observe(xa);
    pb.observe(xb);
    expect.observe(xa);
    expect.observe(xb);
    std::vector<Agent*> agents{a.get(), b.get()};
    std::vector<RunningNormalizer*> pending{&pa, &pb};
    worker_sync(agents, false, pending, &shared);
    CHECK(shared == expect);
    CHECK(a->normalizer() == expect);
    CHECK(b->normalizer() == expect);
    CHECK(pa.count() == 0);
    CHECK(pb.count() == 0);
    std::vector<RunningNormalizer*> short_list{&pa};
    CHECK_THROWS_AS(worker_sync(agents, false, short_list, &shared), UsageError);
}

// ---------------------------------------------------------------- value iteration

TEST_CASE("oracle: closed forms at gamma 0.98") {
    const double g = 0.98;
    const Vec V = bitflip_value_iteration(10, g);
    CHECK(std::abs(V[1] - -g / (1 - g * g)) <= 1e-9);
    CHECK(std::abs(V[0] - -1 / (1 - g * g)) <= 1e-9);
    CHECK(std::abs(V[1] - -24.747474747474747) <= 1e-9);
    CHECK(std::abs(V[0] - -25.252525252525253) <= 1e-9);
    CHECK(std::abs(V[2] - V[0]) <= 1e-9);
    CHECK(std::abs(V[2] - (-1 + g * V[1])) <= 1e-9);
}

TEST_CASE("oracle: greedy-toward closed form for every distance") {
    // V(d) = -(1 - g^(d-1)) / (1 - g) + g^(d-1) V(1) for d >= 1
    for (double g : {0.5, 0.9, 0.98}) {
        const Vec V = bitflip_value_iteration(12, g);
        const double v1 = -g / (1 - g * g);
        for (int d = 1; d <= 12; ++d) {
            const double expect = -(1 - std::pow(g, d - 1)) / (1 - g) + std::pow(g, d - 1) * v1;
            CHECK(std::abs(V[d] - expect) <= 1e-9);
        }
    }
}

TEST_CASE("oracle: gamma 0.5 values") {
    const Vec V = bitflip_value_iteration(3, 0.5);
    CHECK(std::abs(V[1] - -2.0 / 3.0) <= 1e-11);
    CHECK(std::abs(V[0] - -4.0 / 3.0) <= 1e-11);
    CHECK(std::abs(V[2] - -4.0 / 3.0) <= 1e-11);
    CHECK(std::abs(V[3] - -5.0 / 3.0) <= 1e-11);
}

TEST_CASE("oracle: small gamma approaches one-step lookahead") {
    const Vec V = bitflip_value_iteration(6, 1e-9);
    CHECK(std::abs(V[1]) <= 1e-8);
    for (int d = 2; d <= 6; ++d) CHECK(std::abs(V[d] - -1.0) <= 1e-8);
}

TEST_CASE("oracle: bellman residual and errors") {
    const double g = 0.98;
    const Vec V = bitflip_value_iteration(8, g);
    for (int d = 0; d <= 8; ++d) {
        double best = -1e300;
        if (d > 0) best = std::max(best, (d == 1 ? 0.0 : -1.0) + g * V[d - 1]);
        if (d < 8) best = std::max(best, -1.0 + g * V[d + 1]);
        CHECK(std::abs(V[d] - best) <= 1e-10);
    }
    CHECK_THROWS_AS(bitflip_value_iteration(0, 0.9), ConfigError);
    CHECK_THROWS_AS(bitflip_value_iteration(4, 1.0), ConfigError);
}

// ---------------------------------------------------------------- evaluation

TEST_CASE("evaluate: scripted optimal bit flipper always succeeds") {
    BitFlip env(10);
    const Policy flipper = [](const Vec& s, const Vec& g) {
        for (Eigen::Index i = 0; i < s.size(); ++i)
            if (s[i] != g[i]) return Vec(Vec::Constant(1, double(i)));
        return Vec(Vec::Zero(1));
    };
    const EvalResult r = evaluate_policy(env, flipper, 200, 1);
    CHECK(r.success_rate == 1.0);
    CHECK(r.mean_return > -10.0);
}

TEST_CASE("evaluate: untrained agent on 30 bits almost never succeeds") {
    BitFlip env(30);
    DqnAgent agent(env, small_agent(), 2);
    const EvalResult r = evaluate(agent, env, 200, 3);
    CHECK(r.success_rate < 0.05);
    CHECK(r.mean_return <= 0.0);
}

TEST_CASE("evaluate: fixed seed reproduces exactly, fixed goal is used") {
    PuckSlide env;
    DdpgAgent agent(env, small_agent(), 4);
    const EvalResult a = evaluate(agent, env, 20, 9);
    const EvalResult b = evaluate(agent, env, 20, 9);
    CHECK(a.success_rate == b.success_rate);
    CHECK(a.mean_return == b.mean_return);

    Vec goal(2);
    goal << 0.1, 0.3;
    int traces = 0;
    evaluate(agent, env, 7, 9, goal, [&](int i, const EpisodeTrace& tr) {
        CHECK(i == traces);
        CHECK(tr.goal == goal);
        CHECK(tr.horizon() == env.horizon());
        ++traces;
    });
    CHECK(traces == 7);
}

TEST_CASE("evaluate: success modes") {
    BitFlip bits(2);
    EpisodeTrace tr;
    tr.goal = Vec::Ones(2);
    Vec s0 = Vec::Zero(2), s1(2), s2(2);
    s1 << 1, 0;
    s2 << 1, 1;
    tr.states = {s0, s1, s2};
    tr.actions = {Vec::Zero(1), Vec::Ones(1)};
    tr.achieved = tr.states;
    CHECK(episode_success(bits, tr));
    // any_timestep still counts a visit that is later undone
    tr.states = {s0, s2, s1};
    tr.achieved = tr.states;
    CHECK(episode_success(bits, tr));
    tr.states = {s2, s1, s0};
    tr.achieved = tr.states;
    CHECK_FALSE(episode_success(bits, tr));

    PointReach reach;
    EpisodeTrace p;
    p.goal = Vec::Zero(2);
    p.states = {Vec::Constant(2, 0.5), Vec::Zero(2), Vec::Constant(2, 0.05)};
    p.actions = {Vec::Zero(2), Vec::Zero(2)};
    p.achieved = p.states;
    CHECK_FALSE(episode_success(reach, p));
    p.states.back() = Vec::Constant(2, 0.01);
    CHECK(episode_success(reach, p));
}

// ---------------------------------------------------------------- training loop

TEST_CASE("train: episode accounting with one worker") {
    const TrainConfig c = tiny_config();
    BitFlip env(4);
    int episodes = 0;
    TrainHooks hooks;
    hooks.on_episode = [&](int w, const EpisodeTrace& tr) {
        CHECK(w == 0);
        CHECK(tr.horizon() == 4);
        CHECK(tr.states.size() == 5);
        CHECK(tr.achieved.size() == 5);
        ++episodes;
    };
    const TrainResult r = run_training(c, env, AgentKind::dqn, small_agent(), hooks);
    CHECK(episodes == 12);
    REQUIRE(r.workers.size() == 1);
    const WorkerResult& w = r.workers[0];
    CHECK(w.env_steps == 2 * 3 * 2 * 4);
    CHECK(w.episodes == 12);
    CHECK(w.pushes == 48u * 3u);
    CHECK(w.buffer->total_pushes() == 48u * 3u);
    CHECK(w.optimization_steps == 2 * 3 * 2);
    CHECK(w.target_min >= -50.0);
    CHECK(w.target_max <= 0.0);
    REQUIRE(r.metrics.size() == 2);
    CHECK(r.metrics[0].env_steps == 24);
    CHECK(r.metrics[1].env_steps == 48);
    CHECK(r.epochs_run == 2);
    for (const MetricsRow& m : r.metrics) {
        CHECK(m.train_success >= 0.0);
        CHECK(m.train_success <= 1.0);
        CHECK(m.eval_success >= 0.0);
        CHECK(m.eval_success <= 1.0);
    }
}

TEST_CASE("train: episode accounting with several workers") {
    TrainConfig c = tiny_config();
    c.workers = 3;
    c.her = false;
    BitFlip env(5);
    const TrainResult r = run_training(c, env, AgentKind::dqn, small_agent());
    REQUIRE(r.workers.size() == 3);
    std::int64_t total = 0;
    for (const auto& w : r.workers) {
        CHECK(w.env_steps == 2 * 3 * 2 * 5);
        CHECK(w.pushes == std::uint64_t(w.env_steps));
        total += w.env_steps;
    }
    CHECK(total == 2 * 3 * 2 * 5 * 3);
    REQUIRE(r.metrics.size() == 6);
    for (std::size_t i = 0; i < r.metrics.size(); ++i) {
        CHECK(r.metrics[i].epoch == int(i / 3));
        CHECK(r.metrics[i].worker_id == int(i % 3));
    }
    // All workers end with the averaged networks.
    for (const auto& w : r.workers) CHECK(same_params(*w.agent, *r.workers[0].agent));
}

TEST_CASE("train: same seed gives identical metrics and parameters") {
    for (int W : {1, 2}) {
        TrainConfig c = tiny_config();
        c.workers = W;
        PuckSlide env;
        c.optimization_steps = 3;
        const TrainResult a = run_training(c, env, AgentKind::ddpg, small_agent());
        const TrainResult b = run_training(c, env, AgentKind::ddpg, small_agent());
        REQUIRE(a.metrics.size() == b.metrics.size());
        for (std::size_t i = 0; i < a.metrics.size(); ++i)
            CHECK(format_metrics_row(a.metrics[i]) == format_metrics_row(b.metrics[i]));
        CHECK(same_params(*a.workers[0].agent, *b.workers[0].agent));
        CHECK(a.workers[0].agent->normalizer() == b.workers[0].agent->normalizer());
        c.seed += 1;
        const TrainResult d = run_training(c, env, AgentKind::ddpg, small_agent());
        CHECK_FALSE(same_params(*a.workers[0].agent, *d.workers[0].agent));
    }
}

TEST_CASE("train: single-goal mode gives every episode the same goal") {
    TrainConfig c = tiny_config();
    c.single_goal = true;
    c.workers = 2;
    PuckSlide env;
    std::set<std::vector<double>> goals;
    std::mutex m;
    TrainHooks hooks;
    hooks.on_episode = [&](int, const EpisodeTrace& tr) {
        std::lock_guard lock(m);
        goals.insert(std::vector<double>(tr.goal.data(), tr.goal.data() + tr.goal.size()));
    };
    std::set<std::vector<double>> eval_goals;
    hooks.on_eval_episode = [&](int, int, const EpisodeTrace& tr) {
        eval_goals.insert(std::vector<double>(tr.goal.data(), tr.goal.data() + tr.goal.size()));
    };
    run_training(c, env, AgentKind::ddpg, small_agent(), hooks);
    CHECK(goals.size() == 1);
    CHECK(eval_goals == goals);
}

TEST_CASE("train: identical worker seeds keep all four workers bit-identical at every sync") {
    TrainConfig c = tiny_config();
    c.workers = 4;
    c.identical_worker_seeds = true;
    BitFlip env(6);
    int syncs = 0;
    bool all_equal = true;
    TrainHooks hooks;
    hooks.on_sync = [&](std::span<const Agent* const> agents) {
        ++syncs;
        for (const Agent* a : agents) all_equal = all_equal && same_params(*a, *agents[0]);
    };
    const TrainResult r = run_training(c, env, AgentKind::dqn, small_agent(), hooks);
    CHECK(all_equal);
    // One stats sync per cycle plus one per optimization step. Evaluation seeds
    // stay per worker, so only the training-side metrics must agree.
    CHECK(syncs == 2 * 3 * (1 + 2));
    for (const auto& row : r.metrics) {
        CHECK(row.train_success == r.metrics[std::size_t(row.epoch * 4)].train_success);
        CHECK(row.critic_loss == r.metrics[std::size_t(row.epoch * 4)].critic_loss);
    }
}

TEST_CASE("train: no worker starts step k+1 before every worker finished step k") {
    for (SyncMode mode : {SyncMode::step, SyncMode::cycle}) {
        TrainConfig c = tiny_config();
        c.workers = 3;
        c.sync = mode;
        c.optimization_steps = 4;
        BitFlip env(4);
        std::vector<std::int64_t> seen;
        bool aligned = true;
        TrainHooks hooks;
        hooks.on_sync = [&](std::span<const Agent* const> agents) {
            const std::int64_t step = agents[0]->optimizers()[0]->step;
            for (const Agent* a : agents) aligned = aligned && a->optimizers()[0]->step == step;
            seen.push_back(step);
        };
        run_training(c, env, AgentKind::dqn, small_agent(), hooks);
        CHECK(aligned);
        std::vector<std::int64_t> expect;
        for (int cycle = 0; cycle < 2 * 3; ++cycle) {
            expect.push_back(std::int64_t(cycle) * 4);
            if (mode == SyncMode::step)
                for (int s = 1; s <= 4; ++s) expect.push_back(std::int64_t(cycle) * 4 + s);
            else
                expect.push_back(std::int64_t(cycle + 1) * 4);
        }
        CHECK(seen == expect);
    }
}

TEST_CASE("train: checkpoint hook and early stop") {
    TrainConfig c = tiny_config();
    c.epochs = 10;
    c.stop_at_success = 0.01;
    c.eval_episodes = 20;
    BitFlip env(2);
    std::vector<int> epochs;
    TrainHooks hooks;
    hooks.on_epoch_end = [&](int epoch, const Agent&) { epochs.push_back(epoch); };
    const TrainResult r = run_training(c, env, AgentKind::dqn, small_agent(), hooks);
    CHECK(r.epochs_run < 10);
    CHECK(r.metrics.back().eval_success >= 0.01);
    CHECK(int(epochs.size()) == r.epochs_run);
    CHECK(int(r.metrics.size()) == r.epochs_run);
}

TEST_CASE("train: count-based bonus shows up in stored rewards") {
    TrainConfig c = tiny_config();
    c.her = false;
    c.count_based = true;
    c.alpha = 1.0;
    c.beta = 0.01;
    PuckSlide env;
    const TrainResult r = run_training(c, env, AgentKind::ddpg, small_agent());
    const ReplayBuffer& buf = *r.workers[0].buffer;
    CHECK(audit_rewards(buf, r.reward_fn) == 0);
    bool any_bonus = false;
    for (std::size_t i = 0; i < buf.size(); ++i) {
        const Transition t = buf.at(i);
        CHECK(t.bonus > 0.0);
        CHECK(t.bonus <= 1.0);
        any_bonus = any_bonus || t.bonus == 1.0;
    }
    CHECK(any_bonus);
    CHECK(r.clip.high == doctest::Approx(50.0).epsilon(1e-12));
}
