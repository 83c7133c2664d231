#pragma once

#include "mota/config.hpp"
#include "mota/landscape.hpp"
#include "mota/metrics.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mota {

struct RunOptions {
    bool force = false;
    int jobs = 1;
    /// Overrides experiment.out_dir.
    std::optional<std::filesystem::path> out_dir;
    /// Replaces the seed list with this single seed.
    std::optional<std::uint64_t> seed;
    bool verbose = false;
};

struct CellReport {
    Strategy strategy = Strategy::naive_sequential;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
    /// Loaded from an earlier run instead of recomputed.
    bool reused = false;
    double seconds = 0.0;
    TransferMetrics metrics;
    double drift_raw = 0.0;
    std::optional<double> drift_norm;
    std::size_t capacity = 0;
    AccuracyMatrix accuracy;
};

struct LandscapeSummary {
    Strategy strategy = Strategy::naive_sequential;
    /// Basin-shift fraction of the grids around the final parameters, one
    /// entry per mode.
    std::vector<double> basin_shift;
};

struct SeedReport {
    std::uint64_t seed = 0;
    std::string run_id;
    std::vector<CellReport> cells;
    std::optional<TradeoffReport> tradeoff;
    std::vector<LandscapeSummary> landscapes;

    const CellReport* cell(Strategy s) const;
};

struct ExperimentReport {
    std::string config_hash;
    std::filesystem::path out_dir;
    std::vector<SeedReport> seeds;
    double seconds = 0.0;

    bool any_failed() const;
};

/// First 12 hex characters of the config hash, an underscore and the seed.
std::string make_run_id(const std::string& config_hash, std::uint64_t seed);

ExperimentReport run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

/// Drift of a run under the dimension-normalised squared distance.
double run_drift(const StrategyRun& run);

// Persistence of one strategy run: report.json plus snapshots/.
void save_strategy_run(const std::filesystem::path& dir, const StrategyRun& run, const std::string& config_hash);
StrategyRun load_strategy_run(const std::filesystem::path& dir);

/// Header line of metrics.csv.
std::string metrics_csv_header();
std::string metrics_csv_row(const CellReport& cell);

struct Comparison {
    /// Merged metrics.csv rows under one header.
    std::string csv;
    std::size_t rows = 0;
    /// strategy, capacity_params, replay_buffer; one line per strategy.
    std::string capacity;
};

/// Merges the metrics.csv files of the given run directories.
Comparison compare_runs(const std::vector<std::filesystem::path>& run_dirs);

/// Exports grids, trajectory and directions of one captured run into `dir`.
LandscapeSummary export_landscape(const std::filesystem::path& dir, Strategy strategy, const TrajectoryStore& store,
                                  const std::vector<ParamSet>& finals, const Mlp& net, const TaskStream& stream,
                                  const LandscapeConfig& config, bool masked);

/// Re-runs one strategy of a finished run with trajectory capture and
/// exports its landscape under <run_dir>/landscape/<strategy>.
LandscapeSummary landscape_for_run(const std::filesystem::path& run_dir, Strategy strategy);

} // namespace mota
