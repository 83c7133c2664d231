#pragma once

#include "mota/mota_core.hpp"
#include "mota/params.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mota {

enum class Strategy { single_task, naive_sequential, multi_task, ewc, ensemble_distmax, ensemble_seeds, mota };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);
std::vector<Strategy> all_strategies();
/// Strategies made of several modes with joint inference.
bool is_multi_mode(Strategy s);

/// Accuracy of the model after task t on the test split of task v.
/// Entries are optional: the lower triangle is filled by evaluation, the
/// superdiagonal (v = t + 1) feeds forward transfer.
class AccuracyMatrix {
public:
    AccuracyMatrix() = default;
    explicit AccuracyMatrix(int tasks);

    int tasks() const { return tasks_; }
    void set(int t, int v, double acc);
    std::optional<double> get(int t, int v) const;
    /// Throws IncompleteMatrixError when missing.
    double at(int t, int v) const;
    void set_init(int v, double acc);
    double init(int v) const;
    std::optional<double> get_init(int v) const;

private:
    void check(int t, int v) const;

    int tasks_ = 0;
    std::vector<std::vector<std::optional<double>>> entries_;
    std::vector<std::optional<double>> init_;
};

struct StrategyRun {
    Strategy strategy = Strategy::naive_sequential;
    std::uint64_t seed = 0;
    /// snapshots[t-1][i]: parameters of mode i after task t.
    std::vector<std::vector<ParamSet>> snapshots;
    AccuracyMatrix accuracy;
    /// Model parameters across all modes; replay storage is always 0.
    std::size_t capacity = 0;
    std::size_t replay_buffer = 0;
    /// MOTA only: selections[t-1] for t >= 2 (empty entry for task 1).
    std::vector<std::optional<CheckpointSelection>> selections;

    int tasks() const { return static_cast<int>(snapshots.size()); }
    int modes() const { return snapshots.empty() ? 0 : static_cast<int>(snapshots.front().size()); }
};

} // namespace mota
