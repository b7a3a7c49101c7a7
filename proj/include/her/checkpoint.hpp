#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>

#include "her/agents.hpp"
#include "her/nncore.hpp"
#include "her/normalize.hpp"
#include "her/serialize.hpp"

namespace her {

/// Versioned text checkpoint ("her-checkpoint 1"). Every double is stored as a
/// hex-float, so save -> load reproduces parameters, optimizer moments and
/// normalizer statistics bit-exactly.
struct CheckpointMeta {
    std::string config_hash;
    std::string config_text;  // resolved key = value lines
};

struct LoadedCheckpoint {
    std::unique_ptr<Agent> agent;
    CheckpointMeta meta;
};

void write_network(std::ostream& os, const std::string& name, const Network& net);
Network read_network(io::TokenReader& in, const std::string& name);

void write_normalizer(std::ostream& os, const RunningNormalizer& norm);
RunningNormalizer read_normalizer(io::TokenReader& in);

void save_checkpoint(std::ostream& os, const Agent& agent, const CheckpointMeta& meta);
LoadedCheckpoint load_checkpoint(std::istream& is);

void save_checkpoint_file(const std::filesystem::path& path, const Agent& agent, const CheckpointMeta& meta);
LoadedCheckpoint load_checkpoint_file(const std::filesystem::path& path);

}  // namespace her
