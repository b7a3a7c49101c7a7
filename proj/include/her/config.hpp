#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "her/agents.hpp"
#include "her/trainer.hpp"

namespace her {

inline constexpr std::string_view kVersion = "0.1.0";

/// Raw "key = value" entries, keyed by the full dotted name.
using ConfigMap = std::map<std::string, std::string>;

/// Grammar, one entry per line:
///   line    := blank | comment | entry
///   comment := '#' anything
///   entry   := key '=' value [ '#' comment ]
///   key     := section '.' name, section in {env, agent, train, out, manifest}
/// Whitespace around keys and values is ignored; a repeated key is an error.
/// Keys in the manifest section are informational and ignored on load.
ConfigMap parse_config_text(std::string_view text, std::string_view source = "config");
ConfigMap load_config_file(const std::filesystem::path& path);

/// Fully resolved experiment: every default materialized.
struct ExperimentConfig {
    std::string env_name = "bitflip";
    std::map<std::string, double> env_params;  // overrides; resolved configs hold every parameter
    AgentKind agent_kind = AgentKind::dqn;
    AgentConfig agent;
    TrainConfig train;
    std::string out_dir = "runs/latest";
    bool checkpoints = true;
    bool traces = false;
};

/// Applies `entries` on top of the defaults and validates the combination
/// (unknown keys, agent/env mismatch, shaped reward on a discrete env, ...).
/// Throws ConfigError.
ExperimentConfig resolve_config(const ConfigMap& entries);

/// Canonical text of a resolved config: one "key = value" line per setting,
/// numbers printed with round-trip precision. resolve_config(parse(text)) == config.
std::string config_text(const ExperimentConfig& config);
ConfigMap config_entries(const ExperimentConfig& config);

/// 16-hex-digit FNV-1a hash of the canonical text.
std::string config_hash(const ExperimentConfig& config);

std::unique_ptr<Environment> make_env(const ExperimentConfig& config);

/// Names of the non-env keys, in canonical order.
std::vector<std::string> config_keys();

bool parse_switch(std::string_view value, std::string_view key);

}  // namespace her
