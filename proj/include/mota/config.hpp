#pragma once

#include "mota/baselines.hpp"
#include "mota/stream.hpp"
#include "mota/strategy_run.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mota {

struct LandscapeConfig {
    bool enabled = true;
    std::vector<Strategy> strategies{Strategy::naive_sequential, Strategy::mota};
    int steps = 41;
    /// 0 picks 1.5 times the largest projected trajectory coordinate.
    double half_range = 0.0;
};

struct ExperimentConfig {
    StreamSpec stream;
    /// Output and input sizes follow the stream; hidden sizes and activation
    /// come from [network] and [mota].
    StrategyOptions options;
    std::vector<Strategy> strategies = all_strategies();
    std::uint64_t seed = 3407;
    int replicates = 10;
    std::filesystem::path out_dir = "runs";
    bool save_checkpoints = true;
    Strategy drift_reference = Strategy::naive_sequential;
    bool tradeoff = true;
    Strategy tradeoff_baseline = Strategy::ewc;
    LandscapeConfig landscape;

    /// seed, seed + 1, ..., seed + replicates - 1.
    std::vector<std::uint64_t> seeds() const;
    /// Network specs with input and output sizes filled in from the stream.
    StrategyOptions resolved_options() const;
    StreamSpec stream_for(std::uint64_t seed) const;

    /// Throws ConfigError naming the offending field; includes the capacity
    /// fairness check of multi-mode strategies against the single model.
    void validate() const;

    /// Every setting except the output directory as sorted key=value lines.
    std::string canonical() const;
    /// Hex SHA-256 of canonical().
    std::string hash() const;
    /// INI text that parses back to an equal configuration.
    std::string to_ini() const;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

std::string sha256_hex(const std::string& data);

} // namespace mota
