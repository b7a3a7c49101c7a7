#include "her/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "her/errors.hpp"
#include "her/serialize.hpp"

namespace her {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::string format_real(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

double to_real(const std::string& v, std::string_view key) {
    const char* begin = v.c_str();
    char* end = nullptr;
    const double x = std::strtod(begin, &end);
    if (v.empty() || end != begin + v.size() || !std::isfinite(x))
        throw ConfigError(std::string(key) + ": expected a number, got '" + v + "'");
    return x;
}

long long to_integer(const std::string& v, std::string_view key) {
    long long x = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (v.empty() || ec != std::errc{} || ptr != v.data() + v.size())
        throw ConfigError(std::string(key) + ": expected an integer, got '" + v + "'");
    return x;
}

int to_int(const std::string& v, std::string_view key) {
    const long long x = to_integer(v, key);
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
        throw ConfigError(std::string(key) + ": value out of range");
    return int(x);
}

std::vector<int> to_int_list(const std::string& v, std::string_view key) {
    std::vector<int> out;
    if (v.empty() || v == "default") return out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const int x = to_int(trim(item), key);
        if (x <= 0) throw ConfigError(std::string(key) + ": layer widths must be positive");
        out.push_back(x);
    }
    return out;
}

std::string from_int_list(const std::vector<int>& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
    return s;
}

const char* on_off(bool b) { return b ? "on" : "off"; }

struct Field {
    std::string key;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&)> set;
};

template <class T>
Field real_field(std::string key, T ExperimentConfig::*part, double T::*member) {
    return {key, [=](const ExperimentConfig& c) { return format_real(c.*part.*member); },
            [=](ExperimentConfig& c, const std::string& v) { c.*part.*member = to_real(v, key); }};
}

template <class T>
Field int_field(std::string key, T ExperimentConfig::*part, int T::*member) {
    return {key, [=](const ExperimentConfig& c) { return std::to_string(c.*part.*member); },
            [=](ExperimentConfig& c, const std::string& v) { c.*part.*member = to_int(v, key); }};
}

template <class T>
Field switch_field(std::string key, T ExperimentConfig::*part, bool T::*member) {
    return {key, [=](const ExperimentConfig& c) { return std::string(on_off(c.*part.*member)); },
            [=](ExperimentConfig& c, const std::string& v) { c.*part.*member = parse_switch(v, key); }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        using C = ExperimentConfig;
        std::vector<Field> f;
        f.push_back({"agent.kind", [](const C& c) { return std::string(to_string(c.agent_kind)); },
                     [](C& c, const std::string& v) { c.agent_kind = parse_agent_kind(v); }});
        f.push_back({"agent.hidden", [](const C& c) { return from_int_list(c.agent.hidden); },
                     [](C& c, const std::string& v) { c.agent.hidden = to_int_list(v, "agent.hidden"); }});
        f.push_back(real_field("agent.lr", &C::agent, &AgentConfig::learning_rate));
        f.push_back(real_field("agent.epsilon", &C::agent, &AgentConfig::epsilon));
        f.push_back(real_field("agent.noise", &C::agent, &AgentConfig::noise_std_fraction));
        f.push_back(real_field("agent.random_action_prob", &C::agent, &AgentConfig::random_action_prob));
        f.push_back(real_field("agent.penalty", &C::agent, &AgentConfig::penalty));
        f.push_back(real_field("agent.norm_clip", &C::agent, &AgentConfig::norm_clip));
        f.push_back(real_field("agent.variance_floor", &C::agent, &AgentConfig::variance_floor));

        f.push_back(int_field("train.epochs", &C::train, &TrainConfig::epochs));
        f.push_back(int_field("train.cycles", &C::train, &TrainConfig::cycles_per_epoch));
        f.push_back(int_field("train.episodes", &C::train, &TrainConfig::episodes_per_cycle));
        f.push_back(int_field("train.opt_steps", &C::train, &TrainConfig::optimization_steps));
        f.push_back(int_field("train.batch", &C::train, &TrainConfig::batch_size));
        f.push_back({"train.buffer", [](const C& c) { return std::to_string(c.train.buffer_capacity); },
                     [](C& c, const std::string& v) {
                         const long long x = to_integer(v, "train.buffer");
                         if (x <= 0) throw ConfigError("train.buffer must be positive");
                         c.train.buffer_capacity = std::size_t(x);
                     }});
        f.push_back(real_field("train.gamma", &C::train, &TrainConfig::gamma));
        f.push_back(real_field("train.polyak", &C::train, &TrainConfig::polyak_decay));
        f.push_back(int_field("train.workers", &C::train, &TrainConfig::workers));
        f.push_back({"train.sync", [](const C& c) { return std::string(to_string(c.train.sync)); },
                     [](C& c, const std::string& v) { c.train.sync = parse_sync_mode(v); }});
        f.push_back(switch_field("train.identical_seeds", &C::train, &TrainConfig::identical_worker_seeds));
        f.push_back(switch_field("train.average_adam", &C::train, &TrainConfig::average_adam));
        f.push_back(switch_field("train.her", &C::train, &TrainConfig::her));
        f.push_back({"train.strategy", [](const C& c) { return std::string(to_string(c.train.strategy.kind)); },
                     [](C& c, const std::string& v) { c.train.strategy.kind = parse_strategy(v); }});
        f.push_back({"train.k", [](const C& c) { return std::to_string(c.train.strategy.k); },
                     [](C& c, const std::string& v) { c.train.strategy.k = to_int(v, "train.k"); }});
        f.push_back({"train.reward", [](const C& c) { return std::string(to_string(c.train.reward.kind)); },
                     [](C& c, const std::string& v) { c.train.reward.kind = parse_reward_kind(v); }});
        f.push_back({"train.lambda", [](const C& c) { return format_real(c.train.reward.lambda); },
                     [](C& c, const std::string& v) { c.train.reward.lambda = to_real(v, "train.lambda"); }});
        f.push_back({"train.p", [](const C& c) { return format_real(c.train.reward.p); },
                     [](C& c, const std::string& v) { c.train.reward.p = to_real(v, "train.p"); }});
        f.push_back(switch_field("train.single_goal", &C::train, &TrainConfig::single_goal));
        f.push_back(int_field("train.eval_episodes", &C::train, &TrainConfig::eval_episodes));
        f.push_back({"train.seed", [](const C& c) { return std::to_string(c.train.seed); },
                     [](C& c, const std::string& v) {
                         std::uint64_t x = 0;
                         const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
                         if (v.empty() || ec != std::errc{} || ptr != v.data() + v.size())
                             throw ConfigError("train.seed: expected a non-negative integer, got '" + v + "'");
                         c.train.seed = x;
                     }});
        f.push_back(switch_field("train.count_based", &C::train, &TrainConfig::count_based));
        f.push_back(real_field("train.alpha", &C::train, &TrainConfig::alpha));
        f.push_back(real_field("train.beta", &C::train, &TrainConfig::beta));
        f.push_back(real_field("train.stop_at_success", &C::train, &TrainConfig::stop_at_success));
        f.push_back(switch_field("train.wallclock", &C::train, &TrainConfig::record_wallclock));

        f.push_back({"out.dir", [](const C& c) { return c.out_dir; },
                     [](C& c, const std::string& v) {
                         if (v.empty()) throw ConfigError("out.dir must not be empty");
                         c.out_dir = v;
                     }});
        f.push_back({"out.checkpoints", [](const C& c) { return std::string(on_off(c.checkpoints)); },
                     [](C& c, const std::string& v) { c.checkpoints = parse_switch(v, "out.checkpoints"); }});
        f.push_back({"out.traces", [](const C& c) { return std::string(on_off(c.traces)); },
                     [](C& c, const std::string& v) { c.traces = parse_switch(v, "out.traces"); }});
        return f;
    }();
    return table;
}

const Field* find_field(const std::string& key) {
    for (const auto& f : fields())
        if (f.key == key) return &f;
    return nullptr;
}

}  // namespace

bool parse_switch(std::string_view value, std::string_view key) {
    if (value == "on" || value == "true" || value == "yes" || value == "1") return true;
    if (value == "off" || value == "false" || value == "no" || value == "0") return false;
    throw ConfigError(std::string(key) + ": expected on or off, got '" + std::string(value) + "'");
}

ConfigMap parse_config_text(std::string_view text, std::string_view source) {
    ConfigMap out;
    std::istringstream in{std::string(text)};
    std::string line;
    int number = 0;
    auto fail = [&](const std::string& msg) {
        throw ConfigError(std::string(source) + ":" + std::to_string(number) + ": " + msg);
    };
    while (std::getline(in, line)) {
        ++number;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string body = trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) fail("expected 'key = value'");
        const std::string key = trim(std::string_view(body).substr(0, eq));
        const std::string value = trim(std::string_view(body).substr(eq + 1));
        const auto dot = key.find('.');
        if (key.empty() || dot == std::string::npos || dot == 0 || dot + 1 == key.size())
            fail("key '" + key + "' must look like section.name");
        const std::string section = key.substr(0, dot);
        if (section != "env" && section != "agent" && section != "train" && section != "out" && section != "manifest")
            fail("unknown section '" + section + "'");
        if (!out.emplace(key, value).second) fail("duplicate key '" + key + "'");
    }
    return out;
}

ConfigMap load_config_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str(), path.string());
}

std::unique_ptr<Environment> make_env(const ExperimentConfig& config) {
    return make_env(config.env_name, config.env_params);
}

ExperimentConfig resolve_config(const ConfigMap& entries) {
    ExperimentConfig c;
    bool agent_given = false;
    bool hidden_given = false;
    for (const auto& [key, value] : entries) {
        if (key.rfind("manifest.", 0) == 0) continue;
        if (key == "env.name") {
            c.env_name = value;
            continue;
        }
        if (key.rfind("env.", 0) == 0) {
            c.env_params[key.substr(4)] = to_real(value, key);
            continue;
        }
        const Field* f = find_field(key);
        if (!f) throw ConfigError("unknown config key '" + key + "'");
        if (key == "agent.kind") {
            agent_given = value != "auto";
            if (!agent_given) continue;
        }
        if (key == "agent.hidden") hidden_given = !value.empty() && value != "default";
        f->set(c, value);
    }

    const auto env = make_env(c.env_name, c.env_params);
    c.env_params.clear();
    for (const auto& [k, v] : env->parameters()) c.env_params[k] = v;

    const bool discrete = env->action_space().discrete();
    if (!agent_given) c.agent_kind = discrete ? AgentKind::dqn : AgentKind::ddpg;
    if (c.agent_kind == AgentKind::dqn && !discrete)
        throw ConfigError("dqn needs a discrete action space; " + c.env_name + " is continuous");
    if (c.agent_kind == AgentKind::ddpg && discrete)
        throw ConfigError("ddpg needs a continuous action space; " + c.env_name + " is discrete");
    if (!hidden_given)
        c.agent.hidden = c.agent_kind == AgentKind::dqn ? std::vector<int>{256} : std::vector<int>{64, 64, 64};
    if (!(c.agent.learning_rate > 0.0)) throw ConfigError("agent.lr must be positive");
    if (c.agent.epsilon < 0.0 || c.agent.epsilon > 1.0) throw ConfigError("agent.epsilon must lie in [0, 1]");
    if (c.agent.random_action_prob < 0.0 || c.agent.random_action_prob > 1.0)
        throw ConfigError("agent.random_action_prob must lie in [0, 1]");
    if (c.agent.noise_std_fraction < 0.0) throw ConfigError("agent.noise must be non-negative");
    if (c.agent.penalty < 0.0) throw ConfigError("agent.penalty must be non-negative");
    if (!(c.agent.norm_clip > 0.0)) throw ConfigError("agent.norm_clip must be positive");
    if (!(c.agent.variance_floor > 0.0)) throw ConfigError("agent.variance_floor must be positive");
    c.agent.gamma = c.train.gamma;

    c.train.validate();
    RewardFunction check(*env, c.train.reward);
    c.agent.clip = target_clip_for(c.train, check);
    return c;
}

ConfigMap config_entries(const ExperimentConfig& config) {
    ConfigMap out;
    out["env.name"] = config.env_name;
    for (const auto& [k, v] : config.env_params) out["env." + k] = format_real(v);
    for (const auto& f : fields()) out[f.key] = f.get(config);
    return out;
}

std::string config_text(const ExperimentConfig& config) {
    std::string text = "env.name = " + config.env_name + '\n';
    for (const auto& [k, v] : config.env_params) text += "env." + k + " = " + format_real(v) + '\n';
    for (const auto& f : fields()) text += f.key + " = " + f.get(config) + '\n';
    return text;
}

std::string config_hash(const ExperimentConfig& config) { return io::hex64(io::fnv1a(config_text(config))); }

std::vector<std::string> config_keys() {
    std::vector<std::string> keys{"env.name"};
    for (const auto& f : fields()) keys.push_back(f.key);
    return keys;
}

}  // namespace her
