#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "her/config.hpp"
#include "her/errors.hpp"

using namespace her;

namespace {

ExperimentConfig resolve_text(std::string_view text) { return resolve_config(parse_config_text(text)); }

}  // namespace

TEST_CASE("parse: comments, blanks and whitespace") {
    const ConfigMap m = parse_config_text(
        "# leading comment\n"
        "\n"
        "  env.name   =  puckslide   # trailing\n"
        "train.epochs=3\n"
        "agent.hidden = 32,32\n");
    CHECK(m.size() == 3);
    CHECK(m.at("env.name") == "puckslide");
    CHECK(m.at("train.epochs") == "3");
    CHECK(m.at("agent.hidden") == "32,32");
}

TEST_CASE("parse: malformed lines report their line number") {
    CHECK_THROWS_WITH_AS(parse_config_text("train.epochs = 1\njust words\n", "f.cfg"),
                         doctest::Contains("f.cfg:2"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("epochs = 3\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("model.depth = 3\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("train. = 3\n"), ConfigError);
}

TEST_CASE("parse: duplicate keys are rejected") {
    CHECK_THROWS_WITH_AS(parse_config_text("train.k = 4\ntrain.k = 8\n"), doctest::Contains("duplicate"),
                         ConfigError);
}

TEST_CASE("resolve: defaults") {
    const ExperimentConfig c = resolve_config({});
    CHECK(c.env_name == "bitflip");
    CHECK(c.env_params.at("n") == 20);
    CHECK(c.agent_kind == AgentKind::dqn);
    CHECK(c.agent.hidden == std::vector<int>{256});
    CHECK(c.train.epochs == 200);
    CHECK(c.train.her);
    CHECK(c.train.strategy.kind == StrategyKind::final);
    CHECK(c.agent.clip.low == doctest::Approx(-50.0).epsilon(1e-12));
    CHECK(c.agent.clip.high == 0.0);
    CHECK(c.agent.gamma == c.train.gamma);
}

TEST_CASE("resolve: agent kind follows the environment unless given") {
    const ExperimentConfig c = resolve_text("env.name = puckslide\n");
    CHECK(c.agent_kind == AgentKind::ddpg);
    CHECK(c.agent.hidden == std::vector<int>{64, 64, 64});
    CHECK(c.env_params.at("friction") == 1.0);
    CHECK(resolve_text("env.name = pointreach\nagent.kind = auto\n").agent_kind == AgentKind::ddpg);
    CHECK(resolve_text("env.name = puckslide\nagent.hidden = 16,8\n").agent.hidden == std::vector<int>{16, 8});
}

TEST_CASE("resolve: incompatible combinations are configuration errors") {
    CHECK_THROWS_AS(resolve_text("env.name = bitflip\nagent.kind = ddpg\n"), ConfigError);
    CHECK_THROWS_AS(resolve_text("env.name = puckslide\nagent.kind = dqn\n"), ConfigError);
    CHECK_THROWS_AS(resolve_text("env.name = bitflip\ntrain.reward = shaped\n"), ConfigError);
    CHECK_THROWS_AS(resolve_text("env.name = puckslide\ntrain.reward = shaped\ntrain.lambda = 0.5\n"), ConfigError);
    CHECK_THROWS_AS(resolve_text("env.name = cartpole\n"), ConfigError);
    CHECK_THROWS_AS(resolve_text("env.n = 100\n"), ConfigError);
    CHECK_THROWS_AS(resolve_text("env.name = puckslide\nenv.n = 4\n"), ConfigError);
}

TEST_CASE("resolve: unknown keys and bad values") {
    CHECK_THROWS_WITH_AS(resolve_text("train.epoch = 3\n"), doctest::Contains("train.epoch"), ConfigError);
    CHECK_THROWS_AS(resolve_text("train.epochs = three\n"), ConfigError);
    CHECK_THROWS_AS(resolve_text("train.epochs = 2.5\n"), ConfigError);
    CHECK_THROWS_AS(resolve_text("train.epochs = 0\n"), ConfigError);
    CHECK_THROWS_AS(resolve_text("train.gamma = 1\n"), ConfigError);
    CHECK_THROWS_AS(resolve_text("train.strategy = nearest\n"), ConfigError);
    CHECK_THROWS_AS(resolve_text("train.her = maybe\n"), ConfigError);
    CHECK_THROWS_AS(resolve_text("train.sync = sometimes\n"), ConfigError);
    CHECK_THROWS_AS(resolve_text("agent.hidden = 16,0\n"), ConfigError);
    CHECK_THROWS_AS(resolve_text("agent.epsilon = 1.5\n"), ConfigError);
    CHECK_THROWS_AS(resolve_text("train.seed = -1\n"), ConfigError);
    CHECK_THROWS_AS(resolve_text("out.dir = \n"), ConfigError);
}

TEST_CASE("resolve: switches accept the usual spellings") {
    for (const char* on : {"on", "true", "yes", "1"}) CHECK(parse_switch(on, "k"));
    for (const char* off : {"off", "false", "no", "0"}) CHECK_FALSE(parse_switch(off, "k"));
    CHECK_THROWS_AS(parse_switch("enabled", "k"), ConfigError);
    CHECK_FALSE(resolve_text("train.her = off\n").train.her);
}

TEST_CASE("resolve: shaped rewards and count bonus set the target range") {
    const ExperimentConfig shaped =
        resolve_text("env.name = puckslide\ntrain.reward = shaped\ntrain.lambda = 0\ntrain.p = 2\n");
    CHECK(shaped.train.reward.kind == RewardKind::shaped);
    CHECK(shaped.train.reward.p == 2.0);
    CHECK(shaped.agent.clip.low < -50.0);
    CHECK(shaped.agent.clip.high == 0.0);
    const ExperimentConfig counted = resolve_text("env.name = puckslide\ntrain.count_based = on\ntrain.her = off\n");
    CHECK(counted.agent.clip.high == doctest::Approx(50.0).epsilon(1e-12));
}

TEST_CASE("resolve: manifest keys are ignored") {
    const ExperimentConfig c = resolve_text("manifest.version = 9.9\nmanifest.status = complete\ntrain.epochs = 4\n");
    CHECK(c.train.epochs == 4);
}

TEST_CASE("text: round trip reproduces the config and its hash") {
    const ExperimentConfig c = resolve_text(
        "env.name = puckslide\n"
        "env.friction = 0.7\n"
        "train.epochs = 7\n"
        "train.gamma = 0.95\n"
        "train.strategy = future\n"
        "train.k = 4\n"
        "train.workers = 3\n"
        "train.sync = cycle\n"
        "train.seed = 18446744073709551615\n"
        "agent.lr = 0.0003\n"
        "agent.noise = 0.1\n"
        "out.dir = runs/x\n"
        "out.traces = on\n");
    const std::string text = config_text(c);
    const ExperimentConfig back = resolve_config(parse_config_text(text));
    CHECK(config_text(back) == text);
    CHECK(config_hash(back) == config_hash(c));
    CHECK(back.train.seed == 18446744073709551615ull);
    CHECK(back.env_params.at("friction") == 0.7);
    CHECK(back.agent.learning_rate == 0.0003);
    CHECK(back.train.sync == SyncMode::cycle);
    CHECK(back.traces);
}

TEST_CASE("text: every key is emitted once, in canonical order") {
    const std::string text = config_text(resolve_config({}));
    std::size_t pos = 0;
    for (const std::string& key : config_keys()) {
        const std::size_t at = text.find(key + " = ", pos);
        REQUIRE(at != std::string::npos);
        pos = at;
    }
    CHECK(config_entries(resolve_config({})).size() == config_keys().size() + 1);
}

TEST_CASE("hash: 16 hex digits that change with the config") {
    const std::string a = config_hash(resolve_config({}));
    CHECK(a.size() == 16);
    CHECK(a.find_first_not_of("0123456789abcdef") == std::string::npos);
    CHECK(config_hash(resolve_text("train.seed = 1\n")) != a);
    CHECK(config_hash(resolve_text("train.seed = 0\n")) == a);
}

TEST_CASE("file: loading from disk") {
    const auto path = std::filesystem::temp_directory_path() / "her_test_config.cfg";
    {
        std::ofstream os(path);
        os << "env.name = pointreach\ntrain.epochs = 2\n";
    }
    const ExperimentConfig c = resolve_config(load_config_file(path));
    CHECK(c.env_name == "pointreach");
    CHECK(c.train.epochs == 2);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_config_file(path), ConfigError);
}

TEST_CASE("env: resolved parameters build the environment") {
    const ExperimentConfig c = resolve_text("env.name = bitflip\nenv.n = 9\n");
    const auto env = make_env(c);
    CHECK(env->name() == "bitflip");
    CHECK(env->state_dim() == 9);
}
