#pragma once

#include "mota/network.hpp"
#include "mota/stream.hpp"
#include "mota/strategy_run.hpp"

#include <span>
#include <vector>

namespace mota {

/// Fraction of samples whose (masked) joint argmax equals the label; ties go
/// to the lowest class index.
double evaluate_accuracy(const Mlp& net, std::span<const ParamSet* const> modes, const TaskDataset& dataset,
                         bool masked);
double evaluate_accuracy(const Mlp& net, const ParamSet& params, const TaskDataset& dataset, bool masked);

/// Index of the largest entry among `allowed` (all entries when empty).
int masked_argmax(std::span<const double> probs, std::span<const int> allowed);

double average_accuracy(const AccuracyMatrix& a, int t);
double backward_transfer(const AccuracyMatrix& a, int t);
double forward_transfer(const AccuracyMatrix& a, int t);
double remembering(const AccuracyMatrix& a, int t);
/// Mean over v < T of (peak accuracy on v before T) - (accuracy on v after T).
double forgetting(const AccuracyMatrix& a, int tasks);

struct TransferMetrics {
    double avg_acc = 0.0;
    double bwt = 0.0;
    double fwt = 0.0;
    double remembering = 1.0;
    double forgetting = 0.0;
};

/// All transfer metrics at the final task. Multi-task learning follows the
/// (BWT, FWT, Remembering, Forgetting) = (0, 0, 1, 0) convention.
TransferMetrics transfer_metrics(const AccuracyMatrix& a, Strategy strategy);

struct DriftTrace {
    /// distances[k][i]: drift of mode i over transition k (task k+1 -> k+2).
    std::vector<std::vector<double>> distances;
    int modes = 0;
    std::size_t dimension = 0;
    double normalization = 1.0;
};

/// Per-transition, per-mode dimension-normalised squared distances between
/// consecutive task snapshots.
DriftTrace drift_trace(const std::vector<std::vector<ParamSet>>& snapshots);

/// (1/(T-1)) sum over transitions of the drift summed over modes.
double average_task_drift(const DriftTrace& trace);

/// Raw drift divided by the reference strategy's raw drift.
double normalized_drift(double raw, double reference_raw);

struct TradeoffReport {
    double multi_mode_total = 0.0;
    double single_mode_total = 0.0;
    double pi = 0.0;
    /// allocation[i]: tasks allocated to mode i (1-based, ascending).
    std::vector<std::vector<int>> allocation;
    bool supported = false;
};

/// Tasks whose selected checkpoint left epoch 0; task 1 is allocated to every
/// mode. Strategies without selections allocate every task to every mode.
std::vector<std::vector<int>> task_allocation(const StrategyRun& run);

/// pi = sum_i sum_{t in T(i), t >= 2} d(theta_{i,t}, mtl_multi)
///    - sum_{t >= 2} d(theta_t, mtl_single), with d the dimension-normalised
/// squared distance. Refuses capacity mismatches above 10 %.
TradeoffReport tradeoff_report(const StrategyRun& multi, const StrategyRun& single, const ParamSet& mtl_multi_arch,
                               const ParamSet& mtl_single_arch);

} // namespace mota
