#include "her/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <sys/wait.h>

#include "her/checkpoint.hpp"
#include "her/errors.hpp"

namespace her {

namespace fs = std::filesystem;

namespace {

struct FlagKey {
    const char* flag;
    const char* key;
    const char* help;
};

// Every flag here has the config-file key next to it.
const std::vector<FlagKey>& flag_table() {
    static const std::vector<FlagKey> table{
        {"--env", "env.name", "environment: bitflip, pointreach, puckslide"},
        {"--n", "env.n", "bit-flip length"},
        {"--agent", "agent.kind", "dqn, ddpg or auto"},
        {"--hidden", "agent.hidden", "comma-separated hidden layer widths"},
        {"--lr", "agent.lr", "Adam learning rate"},
        {"--epsilon", "agent.epsilon", "DQN epsilon-greedy probability"},
        {"--noise", "agent.noise", "DDPG Gaussian noise std as a fraction of the action range"},
        {"--random-action-prob", "agent.random_action_prob", "DDPG uniform random action probability"},
        {"--penalty", "agent.penalty", "DDPG actor preactivation penalty"},
        {"--norm-clip", "agent.norm_clip", "normalizer clip range"},
        {"--variance-floor", "agent.variance_floor", "normalizer variance floor"},
        {"--epochs", "train.epochs", "epochs"},
        {"--cycles", "train.cycles", "cycles per epoch"},
        {"--episodes", "train.episodes", "episodes per cycle"},
        {"--opt-steps", "train.opt_steps", "optimization steps per cycle"},
        {"--batch", "train.batch", "minibatch size"},
        {"--buffer", "train.buffer", "replay buffer capacity"},
        {"--gamma", "train.gamma", "discount"},
        {"--polyak", "train.polyak", "target network decay"},
        {"--workers", "train.workers", "parallel workers"},
        {"--sync", "train.sync", "averaging frequency: step or cycle"},
        {"--identical-seeds", "train.identical_seeds", "on/off: give every worker the same random stream"},
        {"--average-adam", "train.average_adam", "on/off: also average Adam moments"},
        {"--her", "train.her", "on/off: hindsight relabeling"},
        {"--strategy", "train.strategy", "final, future, episode or random"},
        {"--k", "train.k", "replay goals per transition"},
        {"--reward", "train.reward", "sparse or shaped"},
        {"--lambda", "train.lambda", "shaped reward lambda (0 or 1)"},
        {"--p", "train.p", "shaped reward exponent (1 or 2)"},
        {"--single-goal", "train.single_goal", "on/off: one fixed goal for every episode"},
        {"--eval-episodes", "train.eval_episodes", "evaluation episodes per epoch"},
        {"--seed", "train.seed", "random seed"},
        {"--count-based", "train.count_based", "on/off: count-based exploration bonus"},
        {"--alpha", "train.alpha", "count-based bonus scale"},
        {"--beta", "train.beta", "count-based cell width"},
        {"--stop-at-success", "train.stop_at_success", "stop once eval success reaches this value (0 disables)"},
        {"--wallclock", "train.wallclock", "on/off: record elapsed seconds in metrics"},
        {"--out-dir", "out.dir", "output directory"},
        {"--checkpoints", "out.checkpoints", "on/off: write a checkpoint every epoch"},
        {"--traces", "out.traces", "on/off: write training episode traces"},
    };
    return table;
}

/// Config-file path, key flags and repeated --env-param entries of one subcommand.
struct ConfigFlags {
    std::string config_file;
    std::map<std::string, std::string> values;
    std::vector<std::string> env_params;

    void attach(CLI::App& app) {
        app.add_option("--config", config_file, "key = value config file; flags override it")
            ->check(CLI::ExistingFile);
        app.add_option("--env-param", env_params, "environment parameter override name=value (repeatable)");
        for (const auto& f : flag_table())
            app.add_option(f.flag, values[f.key], std::string(f.help) + " [" + f.key + "]");
    }

    ConfigMap merged(const CLI::App& app) const {
        ConfigMap entries;
        if (!config_file.empty()) entries = load_config_file(config_file);
        for (const auto& p : env_params) {
            const auto eq = p.find('=');
            if (eq == std::string::npos || eq == 0) throw ConfigError("--env-param expects name=value, got '" + p + "'");
            entries["env." + p.substr(0, eq)] = p.substr(eq + 1);
        }
        for (const auto& f : flag_table())
            if (app.count(f.flag) > 0) entries[f.key] = values.at(f.key);
        return entries;
    }
};

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_manifest(const fs::path& path, const ExperimentConfig& config, const std::string& start,
                    const std::string& end, const std::string& status) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << "# Run manifest. Loadable with --config to repeat the run.\n";
    os << config_text(config);
    os << "manifest.version = " << kVersion << '\n';
    os << "manifest.config_hash = " << config_hash(config) << '\n';
    os << "manifest.worker_seeds = ";
    for (int w = 0; w < config.train.workers; ++w) {
        const std::uint64_t s = config.train.identical_worker_seeds ? config.train.seed
                                                                    : config.train.seed ^ std::uint64_t(w);
        os << (w ? "," : "") << s;
    }
    os << '\n';
    os << "manifest.start_time = " << start << '\n';
    os << "manifest.end_time = " << end << '\n';
    os << "manifest.status = " << status << '\n';
}

std::string epoch_name(int epoch) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "epoch_%04d", epoch);
    return buf;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string shell_quote(const std::string& s) {
    std::string q = "'";
    for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
    return q + "'";
}

// ---------------------------------------------------------------- commands

int cmd_train(const ConfigFlags& flags, const CLI::App& app, std::ostream& out) {
    const ExperimentConfig config = resolve_config(flags.merged(app));
    const TrainResult result = run_experiment(config, out);
    const MetricsRow& last = result.metrics.back();
    out << "done: " << result.epochs_run << " epochs, env_steps " << last.env_steps << ", eval_success "
        << last.eval_success << ", output " << config.out_dir << '\n';
    return kExitOk;
}

struct EvalArgs {
    std::string checkpoint;
    int episodes = 100;
    std::uint64_t seed = 0;
    std::string env;
    std::vector<std::string> env_params;
};

int cmd_evaluate(const EvalArgs& a, std::ostream& out) {
    const LoadedCheckpoint ck = load_checkpoint_file(a.checkpoint);
    ConfigMap entries;
    if (!ck.meta.config_text.empty()) entries = parse_config_text(ck.meta.config_text, a.checkpoint);
    if (!a.env.empty()) {
        for (auto it = entries.begin(); it != entries.end();)
            it = it->first.rfind("env.", 0) == 0 ? entries.erase(it) : std::next(it);
        entries["env.name"] = a.env;
    }
    for (const auto& p : a.env_params) {
        const auto eq = p.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("--env-param expects name=value, got '" + p + "'");
        entries["env." + p.substr(0, eq)] = p.substr(eq + 1);
    }
    if (!entries.count("env.name")) throw ConfigError("checkpoint has no config; pass --env");
    std::map<std::string, double> params;
    for (const auto& [k, v] : entries)
        if (k.rfind("env.", 0) == 0 && k != "env.name") params[k.substr(4)] = std::stod(v);
    const auto env = make_env(entries.at("env.name"), params);
    if (a.episodes <= 0) throw ConfigError("--episodes must be positive");
    const EvalResult r = evaluate(*ck.agent, *env, a.episodes, a.seed);
    out << "success_rate " << r.success_rate << '\n' << "mean_return " << r.mean_return << '\n';
    return kExitOk;
}

struct AblateArgs {
    std::string strategies = "final,future,episode,random";
    std::string k_values = "1,4,8";
    std::string rewards = "sparse";
    int seeds = 1;
};

struct Cell {
    std::string name;
    std::string strategy;  // "none" disables HER
    int k = 0;
    RewardSpec reward;
    bool shape_given = false;  // lambda and p come from the cell, not the base config
};

std::vector<Cell> ablation_grid(const AblateArgs& a) {
    const auto strategies = split_list(a.strategies);
    std::vector<int> ks;
    for (const auto& k : split_list(a.k_values)) {
        int v = 0;
        try {
            std::size_t used = 0;
            v = std::stoi(k, &used);
            if (used != k.size()) throw std::invalid_argument(k);
        } catch (const std::exception&) {
            throw UsageError("--k-values: '" + k + "' is not an integer");
        }
        if (v < 1) throw UsageError("--k-values must be positive");
        ks.push_back(v);
    }
    std::vector<RewardSpec> rewards;
    std::vector<std::string> reward_names;
    std::vector<bool> shape_given;
    for (const auto& r : split_list(a.rewards)) {
        // sparse | shaped | shaped:<lambda>:<p>
        RewardSpec spec;
        std::string name = r;
        if (r == "sparse") {
            spec.kind = RewardKind::sparse;
        } else if (r.rfind("shaped", 0) == 0) {
            spec.kind = RewardKind::shaped;
            if (r != "shaped") {
                const auto parts = [&] {
                    std::vector<std::string> p;
                    std::stringstream ss(r);
                    std::string item;
                    while (std::getline(ss, item, ':')) p.push_back(item);
                    return p;
                }();
                if (parts.size() != 3 || parts[0] != "shaped")
                    throw UsageError("--rewards: expected shaped:<lambda>:<p>, got '" + r + "'");
                spec.lambda = std::stod(parts[1]);
                spec.p = std::stod(parts[2]);
                name = "shaped_l" + parts[1] + "_p" + parts[2];
            }
        } else {
            throw UsageError("--rewards: unknown reward '" + r + "'");
        }
        rewards.push_back(spec);
        reward_names.push_back(name);
        shape_given.push_back(name != r || r.find(':') != std::string::npos);
    }
    if (strategies.empty() || rewards.empty()) throw UsageError("ablation grid is empty");

    std::vector<Cell> cells;
    for (std::size_t ri = 0; ri < rewards.size(); ++ri) {
        for (const auto& s : strategies) {
            if (s == "none" || s == "final") {
                cells.push_back({s + "_" + reward_names[ri], s, s == "final" ? 1 : 0, rewards[ri], shape_given[ri]});
                continue;
            }
            parse_strategy(s);
            if (ks.empty()) throw UsageError("ablation grid is empty (no k values for " + s + ")");
            for (int k : ks)
                cells.push_back(
                    {s + "_k" + std::to_string(k) + "_" + reward_names[ri], s, k, rewards[ri], shape_given[ri]});
        }
    }
    return cells;
}

int cmd_ablate(const ConfigFlags& flags, const CLI::App& app, const AblateArgs& a, std::ostream& out) {
    if (a.seeds < 1) throw UsageError("--seeds must be at least 1");
    const std::vector<Cell> cells = ablation_grid(a);
    ConfigMap base = flags.merged(app);
    const ExperimentConfig resolved_base = resolve_config(base);
    const fs::path root = resolved_base.out_dir;
    fs::create_directories(root);

    std::ofstream summary(root / "summary.csv");
    if (!summary) throw std::runtime_error("cannot write " + (root / "summary.csv").string());
    summary << "cell,strategy,k,reward,lambda,p,seeds,max_eval_success,mean_eval_success\n";
    out << "ablation: " << cells.size() << " cells x " << a.seeds << " seeds\n";
    for (const Cell& cell : cells) {
        double max_sum = 0.0, mean_sum = 0.0;
        for (int s = 0; s < a.seeds; ++s) {
            ConfigMap entries = base;
            entries["train.her"] = cell.strategy == "none" ? "off" : "on";
            if (cell.strategy != "none") entries["train.strategy"] = cell.strategy;
            if (cell.k > 0) entries["train.k"] = std::to_string(cell.k);
            entries["train.reward"] = std::string(to_string(cell.reward.kind));
            if (cell.shape_given) {
                std::ostringstream l, p;
                l << std::setprecision(17) << cell.reward.lambda;
                p << std::setprecision(17) << cell.reward.p;
                entries["train.lambda"] = l.str();
                entries["train.p"] = p.str();
            }
            entries["train.seed"] = std::to_string(resolved_base.train.seed + std::uint64_t(s));
            entries["out.dir"] = (root / cell.name / ("seed_" + std::to_string(s))).string();
            const ExperimentConfig config = resolve_config(entries);
            std::ostringstream quiet;
            const TrainResult r = run_experiment(config, quiet);

            // Per-epoch eval success averaged over workers, then max and mean over epochs.
            std::map<int, std::pair<double, int>> per_epoch;
            for (const auto& row : r.metrics) {
                per_epoch[row.epoch].first += row.eval_success;
                per_epoch[row.epoch].second += 1;
            }
            double mx = 0.0, total = 0.0;
            for (const auto& [e, acc] : per_epoch) {
                const double v = acc.first / acc.second;
                mx = std::max(mx, v);
                total += v;
            }
            max_sum += mx;
            mean_sum += total / double(per_epoch.size());
        }
        const RewardSpec& rs = cell.reward;
        const double lambda = cell.shape_given ? rs.lambda : resolved_base.train.reward.lambda;
        const double p = cell.shape_given ? rs.p : resolved_base.train.reward.p;
        summary << cell.name << ',' << cell.strategy << ',' << cell.k << ',' << to_string(rs.kind) << ','
                << std::setprecision(17) << lambda << ',' << p << ',' << a.seeds << ','
                << max_sum / a.seeds << ',' << mean_sum / a.seeds << '\n';
        out << cell.name << ": max " << max_sum / a.seeds << ", mean " << mean_sum / a.seeds << '\n';
    }
    return kExitOk;
}

struct OracleArgs {
    double gamma = 0.98;
    int d_max = 10;
    std::string checkpoint;
    bool compare = false;
    int pairs = 1000;
    std::uint64_t seed = 0;
};

int cmd_oracle(const OracleArgs& a, std::ostream& out) {
    if ((a.compare || a.pairs != 1000) && a.checkpoint.empty())
        throw UsageError("comparison requested but no --checkpoint given");
    const Vec V = bitflip_value_iteration(a.d_max, a.gamma);
    out << "d,V\n";
    for (Eigen::Index d = 0; d < V.size(); ++d) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.12f", V[d]);
        out << d << ',' << buf << '\n';
    }
    if (a.checkpoint.empty()) return kExitOk;
    if (a.pairs < 1) throw UsageError("--pairs must be positive");
    const LoadedCheckpoint ck = load_checkpoint_file(a.checkpoint);
    if (ck.agent->kind() != AgentKind::dqn) throw ConfigError("oracle comparison needs a dqn bit-flip checkpoint");
    const ConfigMap entries = parse_config_text(ck.meta.config_text, a.checkpoint);
    if (!entries.count("env.name") || entries.at("env.name") != "bitflip" || !entries.count("env.n"))
        throw ConfigError("oracle comparison needs a bit-flip checkpoint");
    const BitFlip env(std::stoi(entries.at("env.n")));
    const HammingReport rep = hamming_optimality(*ck.agent, env, a.pairs, a.seed);
    out << "hamming_optimal " << rep.optimal << '/' << rep.pairs << " (" << rep.optimal_fraction() << ")\n";
    out << "solved " << rep.solved << '/' << rep.pairs << '\n';
    return kExitOk;
}

int cmd_plot(const std::vector<std::string>& args, std::ostream& err) {
    const char* tool = std::getenv("HER_PLOT_TOOL");
    if (!tool || !*tool) {
        err << "error: plot tool not configured; set HER_PLOT_TOOL to the plotting executable\n";
        return kExitRuntime;
    }
    std::string cmd = tool;
    for (const auto& a : args) cmd += ' ' + shell_quote(a);
    const int status = std::system(cmd.c_str());
    if (status == -1) return kExitRuntime;
    return WIFEXITED(status) ? WEXITSTATUS(status) : kExitRuntime;
}

}  // namespace

TrainResult run_experiment(const ExperimentConfig& config, std::ostream& log) {
    const fs::path dir = config.out_dir;
    fs::create_directories(dir);
    if (config.checkpoints) fs::create_directories(dir / "checkpoints");
    if (config.traces) fs::create_directories(dir / "traces");
    const std::string start = utc_now();
    write_manifest(dir / "manifest.txt", config, start, "", "running");

    const auto env = make_env(config);
    const CheckpointMeta meta{config_hash(config), config_text(config)};
    std::ofstream csv(dir / "metrics.csv");
    if (!csv) throw std::runtime_error("cannot write " + (dir / "metrics.csv").string());
    csv << metrics_csv_header() << '\n';

    std::vector<std::ofstream> traces;
    if (config.traces) {
        for (int w = 0; w < config.train.workers; ++w) {
            char name[32];
            std::snprintf(name, sizeof name, "worker_%02d.trace", w);
            traces.emplace_back(dir / "traces" / name);
            if (!traces.back()) throw std::runtime_error("cannot write traces");
        }
    }

    TrainHooks hooks;
    hooks.on_metrics = [&](const MetricsRow& row) {
        csv << format_metrics_row(row) << '\n';
        csv.flush();
        if (row.worker_id == 0)
            log << "epoch " << row.epoch << " env_steps " << row.env_steps << " eval_success " << row.eval_success
                << '\n';
    };
    if (config.checkpoints)
        hooks.on_epoch_end = [&](int epoch, const Agent& agent) {
            save_checkpoint_file(dir / "checkpoints" / epoch_name(epoch), agent, meta);
        };
    if (config.traces)
        hooks.on_episode = [&](int worker, const EpisodeTrace& trace) { write_trace(traces[worker], trace); };

    TrainResult result = [&] {
        try {
            return run_training(config.train, *env, config.agent_kind, config.agent, hooks);
        } catch (...) {
            write_manifest(dir / "manifest.txt", config, start, utc_now(), "failed");
            throw;
        }
    }();
    write_manifest(dir / "manifest.txt", config, start, utc_now(), "complete");
    return result;
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path);
    std::string line;
    if (!std::getline(is, line) || line != metrics_csv_header())
        throw std::runtime_error(path + ": unexpected metrics header");
    std::vector<MetricsRow> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string item;
        while (std::getline(ss, item, ',')) f.push_back(item);
        if (f.size() != 9) throw std::runtime_error(path + ": malformed row '" + line + "'");
        MetricsRow r;
        r.epoch = std::stoi(f[0]);
        r.env_steps = std::stoll(f[1]);
        r.train_success = std::stod(f[2]);
        r.eval_success = std::stod(f[3]);
        r.mean_return = std::stod(f[4]);
        r.mean_q = std::stod(f[5]);
        r.critic_loss = std::stod(f[6]);
        r.wallclock_s = std::stod(f[7]);
        r.worker_id = std::stoi(f[8]);
        rows.push_back(r);
    }
    return rows;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Hindsight experience replay: training, evaluation, ablations and oracles", "her_cli"};
    app.require_subcommand(1);

    auto* train = app.add_subcommand("train", "train an agent and write metrics, checkpoints and a manifest");
    ConfigFlags train_flags;
    train_flags.attach(*train);

    auto* eval = app.add_subcommand("evaluate", "evaluate a checkpoint with its target networks");
    EvalArgs eval_args;
    eval->add_option("--checkpoint", eval_args.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
    eval->add_option("--episodes", eval_args.episodes, "evaluation episodes");
    eval->add_option("--seed", eval_args.seed, "evaluation seed");
    eval->add_option("--env", eval_args.env, "environment (default: the checkpoint's)");
    eval->add_option("--env-param", eval_args.env_params, "environment parameter override name=value");

    auto* ablate = app.add_subcommand("ablate", "run a strategy x k x reward grid and summarize it");
    ConfigFlags ablate_flags;
    ablate_flags.attach(*ablate);
    AblateArgs ablate_args;
    ablate->add_option("--strategies", ablate_args.strategies, "comma list of final, future, episode, random, none");
    ablate->add_option("--k-values", ablate_args.k_values, "comma list of k values");
    ablate->add_option("--rewards", ablate_args.rewards, "comma list of sparse, shaped, shaped:<lambda>:<p>");
    ablate->add_option("--seeds", ablate_args.seeds, "seeds per cell (train.seed, train.seed + 1, ...)");

    auto* oracle = app.add_subcommand("oracle", "bit-flip optimal values and greedy-policy optimality check");
    OracleArgs oracle_args;
    oracle->add_option("--gamma", oracle_args.gamma, "discount");
    oracle->add_option("--d-max", oracle_args.d_max, "largest Hamming distance in the table");
    oracle->add_option("--checkpoint", oracle_args.checkpoint, "dqn bit-flip checkpoint to compare")
        ->check(CLI::ExistingFile);
    oracle->add_flag("--compare", oracle_args.compare, "compare the checkpoint's greedy policy");
    oracle->add_option("--pairs", oracle_args.pairs, "random (start, goal) pairs");
    oracle->add_option("--seed", oracle_args.seed, "seed for the pairs");

    auto* plot = app.add_subcommand("plot", "pass arguments through to the plotting tool ($HER_PLOT_TOOL)");
    plot->prefix_command();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitUsage;
    }

    try {
        if (*train) return cmd_train(train_flags, *train, out);
        if (*eval) return cmd_evaluate(eval_args, out);
        if (*ablate) return cmd_ablate(ablate_flags, *ablate, ablate_args, out);
        if (*oracle) return cmd_oracle(oracle_args, out);
        if (*plot) return cmd_plot(plot->remaining(), err);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}

}  // namespace her
