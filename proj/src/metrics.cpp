#include "mota/metrics.hpp"

#include "mota/errors.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace mota {

std::string to_string(Strategy s)
{
    switch (s) {
    case Strategy::single_task:
        return "single_task";
    case Strategy::naive_sequential:
        return "naive_sequential";
    case Strategy::multi_task:
        return "multi_task";
    case Strategy::ewc:
        return "ewc";
    case Strategy::ensemble_distmax:
        return "ensemble_distmax";
    case Strategy::ensemble_seeds:
        return "ensemble_seeds";
    case Strategy::mota:
        return "mota";
    }
    return "?";
}

Strategy strategy_from_string(const std::string& s)
{
    for (Strategy k : all_strategies())
        if (to_string(k) == s)
            return k;
    throw ConfigError(fmt::format("experiment.strategies: unknown strategy '{}'", s));
}

std::vector<Strategy> all_strategies()
{
    return {Strategy::single_task, Strategy::naive_sequential, Strategy::multi_task, Strategy::ewc,
            Strategy::ensemble_distmax, Strategy::ensemble_seeds, Strategy::mota};
}

bool is_multi_mode(Strategy s)
{
    return s == Strategy::mota || s == Strategy::ensemble_distmax || s == Strategy::ensemble_seeds;
}

AccuracyMatrix::AccuracyMatrix(int tasks)
    : tasks_(tasks)
    , entries_(static_cast<std::size_t>(tasks), std::vector<std::optional<double>>(static_cast<std::size_t>(tasks)))
    , init_(static_cast<std::size_t>(tasks))
{
    if (tasks < 1)
        throw ArgumentError("AccuracyMatrix needs at least one task");
}

void AccuracyMatrix::check(int t, int v) const
{
    if (t < 1 || t > tasks_ || v < 1 || v > tasks_)
        throw IndexError(fmt::format("accuracy entry ({}, {}) outside a {}-task matrix", t, v, tasks_));
}

void AccuracyMatrix::set(int t, int v, double acc)
{
    check(t, v);
    if (!(acc >= 0.0 && acc <= 1.0))
        throw ArgumentError(fmt::format("accuracy {} outside [0, 1]", acc));
    entries_[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(v - 1)] = acc;
}

std::optional<double> AccuracyMatrix::get(int t, int v) const
{
    check(t, v);
    return entries_[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(v - 1)];
}

double AccuracyMatrix::at(int t, int v) const
{
    const auto e = get(t, v);
    if (!e)
        throw IncompleteMatrixError(fmt::format("accuracy entry ({}, {}) missing", t, v));
    return *e;
}

void AccuracyMatrix::set_init(int v, double acc)
{
    check(1, v);
    if (!(acc >= 0.0 && acc <= 1.0))
        throw ArgumentError(fmt::format("accuracy {} outside [0, 1]", acc));
    init_[static_cast<std::size_t>(v - 1)] = acc;
}

std::optional<double> AccuracyMatrix::get_init(int v) const
{
    check(1, v);
    return init_[static_cast<std::size_t>(v - 1)];
}

double AccuracyMatrix::init(int v) const
{
    const auto e = get_init(v);
    if (!e)
        throw IncompleteMatrixError(fmt::format("initial accuracy for task {} missing", v));
    return *e;
}

int masked_argmax(std::span<const double> probs, std::span<const int> allowed)
{
    int best = -1;
    double best_p = 0.0;
    auto consider = [&](int c) {
        const double p = probs[static_cast<std::size_t>(c)];
        if (best < 0 || p > best_p || (p == best_p && c < best)) {
            best = c;
            best_p = p;
        }
    };
    if (allowed.empty())
        for (int c = 0; c < static_cast<int>(probs.size()); ++c)
            consider(c);
    else
        for (int c : allowed)
            consider(c);
    return best;
}

double evaluate_accuracy(const Mlp& net, std::span<const ParamSet* const> modes, const TaskDataset& dataset,
                         bool masked)
{
    if (dataset.empty())
        throw ArgumentError("evaluate_accuracy: empty dataset");
    const std::span<const int> allowed = masked ? std::span<const int>(dataset.label_set) : std::span<const int>{};
    std::size_t correct = 0;
    for (const auto& s : dataset.samples) {
        const auto rho = joint_inference(net, modes, s.x, allowed);
        if (masked_argmax(rho, allowed) == s.label)
            ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

double evaluate_accuracy(const Mlp& net, const ParamSet& params, const TaskDataset& dataset, bool masked)
{
    const ParamSet* one[] = {&params};
    return evaluate_accuracy(net, one, dataset, masked);
}

namespace {

void require_at_least_two(int t, const char* what)
{
    if (t < 2)
        throw ArgumentError(fmt::format("{} needs t >= 2", what));
}

} // namespace

double average_accuracy(const AccuracyMatrix& a, int t)
{
    if (t < 1 || t > a.tasks())
        throw ArgumentError(fmt::format("average_accuracy: t = {} outside [1, {}]", t, a.tasks()));
    double s = 0.0;
    for (int v = 1; v <= t; ++v)
        s += a.at(t, v);
    return s / t;
}

double backward_transfer(const AccuracyMatrix& a, int t)
{
    require_at_least_two(t, "backward_transfer");
    double s = 0.0;
    for (int v = 1; v <= t - 1; ++v)
        s += a.at(t, v) - a.at(v, v);
    return s / (t - 1);
}

double forward_transfer(const AccuracyMatrix& a, int t)
{
    require_at_least_two(t, "forward_transfer");
    double s = 0.0;
    for (int v = 2; v <= t; ++v)
        s += a.at(v - 1, v) - a.init(v);
    return s / (t - 1);
}

double remembering(const AccuracyMatrix& a, int t)
{
    return 1.0 - std::abs(std::min(0.0, backward_transfer(a, t)));
}

double forgetting(const AccuracyMatrix& a, int tasks)
{
    require_at_least_two(tasks, "forgetting");
    double s = 0.0;
    for (int v = 1; v <= tasks - 1; ++v) {
        double peak = a.at(v, v);
        for (int t = v + 1; t <= tasks - 1; ++t)
            peak = std::max(peak, a.at(t, v));
        s += peak - a.at(tasks, v);
    }
    return s / (tasks - 1);
}

TransferMetrics transfer_metrics(const AccuracyMatrix& a, Strategy strategy)
{
    const int t = a.tasks();
    TransferMetrics m;
    m.avg_acc = average_accuracy(a, t);
    if (t < 2 || strategy == Strategy::multi_task)
        return m;
    m.bwt = backward_transfer(a, t);
    m.fwt = forward_transfer(a, t);
    m.remembering = remembering(a, t);
    m.forgetting = forgetting(a, t);
    return m;
}

DriftTrace drift_trace(const std::vector<std::vector<ParamSet>>& snapshots)
{
    DriftTrace trace;
    if (snapshots.empty())
        return trace;
    trace.modes = static_cast<int>(snapshots.front().size());
    trace.dimension = snapshots.front().empty() ? 0 : snapshots.front().front().size();
    for (std::size_t t = 1; t < snapshots.size(); ++t) {
        if (snapshots[t].size() != snapshots[t - 1].size())
            throw ShapeError("drift_trace: mode count changed between tasks");
        std::vector<double> row;
        for (std::size_t i = 0; i < snapshots[t].size(); ++i)
            row.push_back(mean_squared_distance(snapshots[t][i], snapshots[t - 1][i]));
        trace.distances.push_back(std::move(row));
    }
    return trace;
}

double average_task_drift(const DriftTrace& trace)
{
    if (trace.distances.empty())
        throw ArgumentError("average_task_drift: no task transitions");
    double total = 0.0;
    for (const auto& row : trace.distances) {
        double cumulative = 0.0;
        for (double d : row) {
            if (d < 0.0)
                throw InvariantError("negative drift distance");
            cumulative += d;
        }
        total += cumulative;
    }
    return total / static_cast<double>(trace.distances.size());
}

double normalized_drift(double raw, double reference_raw)
{
    if (!(reference_raw > 0.0))
        throw NumericError("drift normalisation reference must be positive");
    return raw / reference_raw;
}

std::vector<std::vector<int>> task_allocation(const StrategyRun& run)
{
    const int modes = run.modes();
    std::vector<std::vector<int>> out(static_cast<std::size_t>(modes));
    for (int t = 1; t <= run.tasks(); ++t) {
        const bool has_selection = t >= 2 && static_cast<std::size_t>(t - 1) < run.selections.size() &&
                                   run.selections[static_cast<std::size_t>(t - 1)].has_value();
        for (int i = 0; i < modes; ++i) {
            bool allocated = true;
            if (has_selection)
                allocated = run.selections[static_cast<std::size_t>(t - 1)]->epochs.at(static_cast<std::size_t>(i)) > 0;
            if (allocated)
                out[static_cast<std::size_t>(i)].push_back(t);
        }
    }
    return out;
}

TradeoffReport tradeoff_report(const StrategyRun& multi, const StrategyRun& single, const ParamSet& mtl_multi_arch,
                               const ParamSet& mtl_single_arch)
{
    if (single.modes() != 1)
        throw ArgumentError("tradeoff_report: the single-mode run must have exactly one mode");
    if (multi.tasks() != single.tasks())
        throw ArgumentError("tradeoff_report: runs cover different task counts");
    const double cap_multi = static_cast<double>(multi.capacity);
    const double cap_single = static_cast<double>(single.capacity);
    if (!(cap_single > 0.0) || std::abs(cap_multi - cap_single) / cap_single > 0.10)
        throw ArgumentError(fmt::format("tradeoff_report: capacities {} and {} differ by more than 10%",
                                        multi.capacity, single.capacity));

    TradeoffReport r;
    r.allocation = task_allocation(multi);
    for (std::size_t i = 0; i < r.allocation.size(); ++i)
        for (int t : r.allocation[i])
            if (t >= 2)
                r.multi_mode_total +=
                    mean_squared_distance(multi.snapshots[static_cast<std::size_t>(t - 1)][i], mtl_multi_arch);
    for (int t = 2; t <= single.tasks(); ++t)
        r.single_mode_total += mean_squared_distance(single.snapshots[static_cast<std::size_t>(t - 1)][0], mtl_single_arch);
    r.pi = r.multi_mode_total - r.single_mode_total;
    r.supported = r.pi < 0.0;
    return r;
}

} // namespace mota
