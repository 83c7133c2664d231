#pragma once

#include "mota/mota_core.hpp"
#include "mota/stream.hpp"
#include "mota/strategy_run.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <vector>

namespace mota {

struct StrategyOptions {
    /// Architecture of single-mode strategies.
    NetworkSpec network;
    /// Architecture of each mode of multi-mode strategies.
    NetworkSpec mode_network{16, {19, 19}, 10, Activation::relu};
    TrainOptions train;
    double ewc_lambda = 1000.0;
    int modes = 2;
    int ensemble_modes = 2;
    double beta_max = 100.0;
    double beta_min = 1000.0;
    double drift_weight = 0.1;
    std::size_t enumeration_cap = 4096;
    std::size_t fisher_samples = 0;
    bool masked = true;
    /// Epochs of pre-fitting on a held-out synthetic task before task 1; 0 keeps
    /// the random initialisation.
    int pretext_epochs = 0;
};

/// Data access for one step of a strategy run.
class TaskFeed {
public:
    virtual ~TaskFeed() = default;
    /// Task being learned (1-based).
    virtual int current() const = 0;
    /// Splits of task t; throws DataAccessError when the feed forbids it.
    virtual const TaskSplits& task(int t) const = 0;
};

/// Exposes only the task currently being learned.
class SequentialTaskFeed : public TaskFeed {
public:
    explicit SequentialTaskFeed(const TaskStream& stream) : stream_(stream) {}
    void advance(int t);
    int current() const override { return current_; }
    const TaskSplits& task(int t) const override;

private:
    const TaskStream& stream_;
    int current_ = 0;
};

/// Exposes every task up to and including the current one.
class CumulativeTaskFeed : public TaskFeed {
public:
    explicit CumulativeTaskFeed(const TaskStream& stream) : stream_(stream) {}
    void advance(int t);
    int current() const override { return current_; }
    const TaskSplits& task(int t) const override;

private:
    const TaskStream& stream_;
    int current_ = 0;
};

/// (task, mode, epoch, params); epoch 0 is the state a task starts from.
using TrajectoryObserver = std::function<void(int, int, int, const ParamSet&)>;

struct RunHooks {
    TrajectoryObserver on_epoch;
};

/// A continual learner. The driver calls learn() once per task, in order,
/// and reads the mode parameters back for evaluation.
class Learner {
public:
    virtual ~Learner() = default;
    virtual const Mlp& network() const = 0;
    /// True when the learner may see all tasks up to the current one.
    virtual bool cumulative() const { return false; }
    virtual void learn(const TaskFeed& feed) = 0;
    virtual std::vector<ParamSet> modes() const = 0;
    /// Checkpoint selection of the most recent task, if the learner makes one.
    virtual std::optional<CheckpointSelection> last_selection() const { return std::nullopt; }
};

std::unique_ptr<Learner> make_learner(Strategy strategy, const StrategyOptions& options, std::uint64_t seed,
                                      const RunHooks& hooks = {});

/// Feeds the stream to the learner task by task and fills the accuracy
/// matrix: the init row before task 1, then A[t][v] for v <= t + 1.
StrategyRun run_learner(Learner& learner, Strategy tag, const TaskStream& stream, bool masked, std::uint64_t seed);

StrategyRun run_strategy(Strategy strategy, const TaskStream& stream, const StrategyOptions& options,
                         std::uint64_t seed, const RunHooks& hooks = {});

/// Initial parameters shared by every strategy of the given architecture.
ParamSet initial_params(const NetworkSpec& spec, std::uint64_t seed);
/// As above, then pre-fitted when options.pretext_epochs > 0.
ParamSet initial_params(const NetworkSpec& spec, std::uint64_t seed, const StrategyOptions& options);

/// Trains `params` on a synthetic task over every output class, drawn from a
/// seed no experiment stream uses. No-op for options.pretext_epochs == 0.
void pretrain(const NetworkSpec& spec, ParamSet& params, std::uint64_t seed, const StrategyOptions& options);

/// Multi-task parameters over all tasks of the stream for one architecture.
ParamSet train_mtl_reference(const TaskStream& stream, const NetworkSpec& spec, const StrategyOptions& options,
                             std::uint64_t seed);

/// Capacity of a strategy under the given options.
std::size_t strategy_capacity(Strategy strategy, const StrategyOptions& options);

} // namespace mota
