#include "her/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "her/errors.hpp"

namespace her {

namespace {

constexpr int kVersion = 1;

void write_adam(std::ostream& os, const std::string& name, const AdamState& s) {
    os << "adam " << name << '\n';
    os << "step " << s.step << " lr " << io::format_double(s.learning_rate) << " beta1 "
       << io::format_double(s.beta1) << " beta2 " << io::format_double(s.beta2) << " eps "
       << io::format_double(s.epsilon) << '\n';
    os << "m ";
    io::write_vector(os, s.m);
    os << "\nv ";
    io::write_vector(os, s.v);
    os << '\n';
}

AdamState read_adam(io::TokenReader& in, const std::string& name) {
    in.expect("adam");
    in.expect(name);
    AdamState s;
    in.expect("step");
    s.step = in.next_int();
    in.expect("lr");
    s.learning_rate = in.next_double();
    in.expect("beta1");
    s.beta1 = in.next_double();
    in.expect("beta2");
    s.beta2 = in.next_double();
    in.expect("eps");
    s.epsilon = in.next_double();
    in.expect("m");
    s.m = in.next_vector();
    in.expect("v");
    s.v = in.next_vector();
    return s;
}

void write_agent_config(std::ostream& os, const AgentConfig& c) {
    os << "agent_config"
       << " learning_rate " << io::format_double(c.learning_rate) << " gamma " << io::format_double(c.gamma)
       << " clip_low " << io::format_double(c.clip.low) << " clip_high " << io::format_double(c.clip.high)
       << " epsilon " << io::format_double(c.epsilon) << " noise_std_fraction "
       << io::format_double(c.noise_std_fraction) << " random_action_prob "
       << io::format_double(c.random_action_prob) << " penalty " << io::format_double(c.penalty) << " norm_clip "
       << io::format_double(c.norm_clip) << " variance_floor " << io::format_double(c.variance_floor) << '\n';
    os << "hidden " << c.hidden.size();
    for (int h : c.hidden) os << ' ' << h;
    os << '\n';
}

AgentConfig read_agent_config(io::TokenReader& in) {
    AgentConfig c;
    in.expect("agent_config");
    auto field = [&](const char* key) {
        in.expect(key);
        return in.next_double();
    };
    c.learning_rate = field("learning_rate");
    c.gamma = field("gamma");
    c.clip.low = field("clip_low");
    c.clip.high = field("clip_high");
    c.epsilon = field("epsilon");
    c.noise_std_fraction = field("noise_std_fraction");
    c.random_action_prob = field("random_action_prob");
    c.penalty = field("penalty");
    c.norm_clip = field("norm_clip");
    c.variance_floor = field("variance_floor");
    in.expect("hidden");
    const auto n = in.next_int();
    for (std::int64_t i = 0; i < n; ++i) c.hidden.push_back(int(in.next_int()));
    return c;
}

}  // namespace

void write_network(std::ostream& os, const std::string& name, const Network& net) {
    os << "network " << name << '\n';
    os << "layers " << net.layers().size() << '\n';
    for (const auto& l : net.layers())
        os << l.input_width << ' ' << l.output_width << ' ' << to_string(l.activation) << '\n';
    if (net.output_scale()) {
        os << "output_scale ";
        io::write_vector(os, *net.output_scale());
        os << '\n';
    } else {
        os << "output_scale none\n";
    }
    os << "params ";
    io::write_vector(os, net.params());
    os << '\n';
}

Network read_network(io::TokenReader& in, const std::string& name) {
    in.expect("network");
    in.expect(name);
    in.expect("layers");
    const auto count = in.next_int();
    if (count < 1) in.fail("network needs at least one layer");
    std::vector<LayerSpec> layers;
    for (std::int64_t i = 0; i < count; ++i) {
        LayerSpec l;
        l.input_width = int(in.next_int());
        l.output_width = int(in.next_int());
        l.activation = parse_activation(in.next());
        layers.push_back(l);
    }
    in.expect("output_scale");
    std::optional<Vec> scale;
    const std::string tok = in.next();
    if (tok != "none") {
        const auto n = io::parse_double(tok);
        Vec s(static_cast<Eigen::Index>(n));
        for (Eigen::Index i = 0; i < s.size(); ++i) s[i] = in.next_double();
        scale = std::move(s);
    }
    Network net(std::move(layers), std::move(scale));
    in.expect("params");
    Vec params = in.next_vector();
    if (params.size() != net.param_count()) in.fail("parameter count does not match the layer specs");
    net.params() = std::move(params);
    return net;
}

void write_normalizer(std::ostream& os, const RunningNormalizer& norm) {
    os << "normalizer " << norm.count() << ' ' << io::format_double(norm.clip()) << ' '
       << io::format_double(norm.variance_floor()) << '\n';
    os << "sum ";
    io::write_vector(os, norm.sum());
    os << "\nsum_sq ";
    io::write_vector(os, norm.sum_sq());
    os << '\n';
}

RunningNormalizer read_normalizer(io::TokenReader& in) {
    in.expect("normalizer");
    const auto count = in.next_int();
    const double clip = in.next_double();
    const double floor = in.next_double();
    in.expect("sum");
    Vec sum = in.next_vector();
    in.expect("sum_sq");
    Vec sum_sq = in.next_vector();
    return RunningNormalizer::from_stats(count, std::move(sum), std::move(sum_sq), clip, floor);
}

void save_checkpoint(std::ostream& os, const Agent& agent, const CheckpointMeta& meta) {
    os << "her-checkpoint " << kVersion << '\n';
    os << "config_hash " << (meta.config_hash.empty() ? "none" : meta.config_hash) << '\n';
    os << "agent " << to_string(agent.kind()) << '\n';
    write_agent_config(os, agent.config());
    write_normalizer(os, agent.normalizer());
    if (agent.kind() == AgentKind::ddpg) {
        const auto& space = static_cast<const DdpgAgent&>(agent).action_space();
        os << "action_box ";
        io::write_vector(os, space.low);
        os << ' ';
        io::write_vector(os, space.high);
        os << '\n';
    }
    const auto nets = agent.networks();
    const auto names = agent.network_names();
    for (std::size_t i = 0; i < nets.size(); ++i) write_network(os, names[i], *nets[i]);
    const auto opts = agent.optimizers();
    for (std::size_t i = 0; i < opts.size(); ++i) write_adam(os, names[i], *opts[i]);

    std::size_t lines = 0;
    for (char c : meta.config_text) lines += c == '\n';
    if (!meta.config_text.empty() && meta.config_text.back() != '\n') ++lines;
    os << "config " << lines << '\n' << meta.config_text;
    if (!meta.config_text.empty() && meta.config_text.back() != '\n') os << '\n';
    os << "end\n";
}

LoadedCheckpoint load_checkpoint(std::istream& is) {
    io::TokenReader in(is, "checkpoint");
    in.expect("her-checkpoint");
    if (in.next_int() != kVersion) in.fail("unsupported checkpoint version");
    LoadedCheckpoint out;
    in.expect("config_hash");
    out.meta.config_hash = in.next();
    if (out.meta.config_hash == "none") out.meta.config_hash.clear();
    in.expect("agent");
    const AgentKind kind = parse_agent_kind(in.next());
    AgentConfig config = read_agent_config(in);
    RunningNormalizer norm = read_normalizer(in);
    if (kind == AgentKind::dqn) {
        Network q = read_network(in, "q");
        Network qt = read_network(in, "q_target");
        AdamState adam = read_adam(in, "q");
        out.agent = std::make_unique<DqnAgent>(std::move(config), std::move(norm), std::move(q), std::move(qt),
                                               std::move(adam));
    } else {
        in.expect("action_box");
        Vec low = in.next_vector();
        Vec high = in.next_vector();
        Network actor = read_network(in, "actor");
        Network critic = read_network(in, "critic");
        Network actor_t = read_network(in, "actor_target");
        Network critic_t = read_network(in, "critic_target");
        AdamState actor_adam = read_adam(in, "actor");
        AdamState critic_adam = read_adam(in, "critic");
        out.agent = std::make_unique<DdpgAgent>(std::move(config), std::move(norm),
                                                ActionSpace::make_box(std::move(low), std::move(high)),
                                                std::move(actor), std::move(critic), std::move(actor_t),
                                                std::move(critic_t), std::move(actor_adam), std::move(critic_adam));
    }
    in.expect("config");
    const auto lines = in.next_int();
    in.rest_of_line();
    std::string text;
    for (std::int64_t i = 0; i < lines; ++i) {
        std::string line;
        if (!std::getline(is, line)) in.fail("truncated config section");
        text += line + '\n';
    }
    out.meta.config_text = std::move(text);
    in.expect("end");
    return out;
}

void save_checkpoint_file(const std::filesystem::path& path, const Agent& agent, const CheckpointMeta& meta) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
    save_checkpoint(os, agent, meta);
    if (!os) throw std::runtime_error("failed writing checkpoint " + path.string());
}

LoadedCheckpoint load_checkpoint_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
    return load_checkpoint(is);
}

}  // namespace her
