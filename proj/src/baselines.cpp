#include "mota/baselines.hpp"

#include "mota/errors.hpp"
#include "mota/metrics.hpp"
#include "mota/rng.hpp"

#include <fmt/format.h>

namespace mota {

void SequentialTaskFeed::advance(int t)
{
    if (t < 1 || t > stream_.size())
        throw IndexError(fmt::format("task {} outside the stream", t));
    current_ = t;
}

const TaskSplits& SequentialTaskFeed::task(int t) const
{
    if (t != current_)
        throw DataAccessError(
            fmt::format("sequential strategy requested task {} while learning task {}", t, current_));
    return stream_.task(t);
}

void CumulativeTaskFeed::advance(int t)
{
    if (t < 1 || t > stream_.size())
        throw IndexError(fmt::format("task {} outside the stream", t));
    current_ = t;
}

const TaskSplits& CumulativeTaskFeed::task(int t) const
{
    if (t < 1 || t > current_)
        throw DataAccessError(fmt::format("requested task {} while learning task {}", t, current_));
    return stream_.task(t);
}

ParamSet initial_params(const NetworkSpec& spec, std::uint64_t seed)
{
    return init_params(spec, derive_seed(seed, {seed_tag::init}));
}

ParamSet initial_params(const NetworkSpec& spec, std::uint64_t seed, const StrategyOptions& options)
{
    ParamSet p = initial_params(spec, seed);
    pretrain(spec, p, seed, options);
    return p;
}

void pretrain(const NetworkSpec& spec, ParamSet& params, std::uint64_t seed, const StrategyOptions& options)
{
    if (options.pretext_epochs <= 0)
        return;
    StreamSpec ss;
    ss.tasks = 1;
    ss.classes_per_task = spec.output_dim;
    ss.input_dim = spec.input_dim;
    ss.seed = derive_seed(seed, {seed_tag::pretext});
    const auto pretext = make_stream(ss);
    TrainOptions t = options.train;
    t.epochs = options.pretext_epochs;
    const Mlp net(spec);
    // task index 0 keeps these batch orders apart from every real task
    train_model(net, params, examples_of(pretext.task(1).train, false), t, ss.seed, 0, 0);
}

namespace {

MotaOptions mota_options(const StrategyOptions& o)
{
    MotaOptions m;
    m.train = o.train;
    m.drift_weight = o.drift_weight;
    m.enumeration_cap = o.enumeration_cap;
    m.fisher_samples = o.fisher_samples;
    m.masked = o.masked;
    return m;
}

EpochObserver epoch_hook(const RunHooks& hooks, int task, int mode)
{
    if (!hooks.on_epoch)
        return {};
    return [&hooks, task, mode](int e, const ParamSet& p) { hooks.on_epoch(task, mode, e, p); };
}

ModeObserver mode_hook(const RunHooks& hooks, int task)
{
    if (!hooks.on_epoch)
        return {};
    return [&hooks, task](int mode, int e, const ParamSet& p) { hooks.on_epoch(task, mode, e, p); };
}

void announce_start(const RunHooks& hooks, int task, std::span<const ParamSet* const> modes)
{
    if (!hooks.on_epoch)
        return;
    for (std::size_t i = 0; i < modes.size(); ++i)
        hooks.on_epoch(task, static_cast<int>(i), 0, *modes[i]);
}

class SingleModelLearner : public Learner {
public:
    enum class Kind { single_task, naive, ewc };

    SingleModelLearner(Kind kind, const StrategyOptions& o, std::uint64_t seed, const RunHooks& hooks)
        : kind_(kind), options_(o), seed_(seed), hooks_(hooks), net_(o.network), init_(initial_params(o.network, seed, o)),
          params_(init_)
    {
    }

    const Mlp& network() const override { return net_; }
    std::vector<ParamSet> modes() const override { return {params_}; }

    void learn(const TaskFeed& feed) override
    {
        const int t = feed.current();
        const auto& data = feed.task(t);
        if (kind_ == Kind::single_task)
            params_ = init_;
        const ParamSet* start[] = {&params_};
        announce_start(hooks_, t, start);
        const auto examples = examples_of(data.train, options_.masked);
        const EwcAnchor pull{&anchor_, &fisher_, options_.ewc_lambda};
        const bool penalised = kind_ == Kind::ewc && t >= 2;
        train_model(net_, params_, examples, options_.train, seed_, t, 0, penalised ? &pull : nullptr,
                    epoch_hook(hooks_, t, 0));
        if (kind_ == Kind::ewc) {
            anchor_ = params_;
            fisher_ = estimate_fisher(net_, params_, examples, options_.fisher_samples);
        }
    }

private:
    Kind kind_;
    StrategyOptions options_;
    std::uint64_t seed_;
    RunHooks hooks_;
    Mlp net_;
    ParamSet init_;
    ParamSet params_;
    ParamSet anchor_;
    ParamSet fisher_;
};

class MultiTaskLearner : public Learner {
public:
    MultiTaskLearner(const StrategyOptions& o, std::uint64_t seed, const RunHooks& hooks)
        : options_(o), seed_(seed), hooks_(hooks), net_(o.network), init_(initial_params(o.network, seed, o)),
          params_(init_)
    {
    }

    const Mlp& network() const override { return net_; }
    bool cumulative() const override { return true; }
    std::vector<ParamSet> modes() const override { return {params_}; }

    void learn(const TaskFeed& feed) override
    {
        const int t = feed.current();
        std::vector<const TaskDataset*> seen;
        for (int v = 1; v <= t; ++v)
            seen.push_back(&feed.task(v).train);
        params_ = init_;
        const ParamSet* start[] = {&params_};
        announce_start(hooks_, t, start);
        const auto examples = examples_of(seen, options_.masked);
        train_model(net_, params_, examples, options_.train, seed_, t, 0, nullptr, epoch_hook(hooks_, t, 0));
    }

private:
    StrategyOptions options_;
    std::uint64_t seed_;
    RunHooks hooks_;
    Mlp net_;
    ParamSet init_;
    ParamSet params_;
};

class EnsembleLearner : public Learner {
public:
    EnsembleLearner(bool distmax, const StrategyOptions& o, std::uint64_t seed, const RunHooks& hooks)
        : distmax_(distmax), options_(o), seed_(seed), hooks_(hooks), net_(o.mode_network)
    {
        if (o.ensemble_modes < 1)
            throw ConfigError("baselines.ensemble_modes must be >= 1");
        if (distmax) {
            modes_ = ModeSet::replicate(initial_params(o.mode_network, seed, o), o.ensemble_modes, o.beta_max, 0.0);
        } else {
            // mode i starts from seed index i + 1; index 1 is the shared initialisation
            modes_ = ModeSet::replicate(initial_params(o.mode_network, seed, o), o.ensemble_modes, 0.0, 0.0);
            for (int i = 1; i < o.ensemble_modes; ++i) {
                auto& p = modes_.modes[static_cast<std::size_t>(i)].params;
                p = init_params(o.mode_network, derive_seed(seed, {seed_tag::mode_init, static_cast<std::uint64_t>(i + 1)}));
                pretrain(o.mode_network, p, seed, o);
            }
        }
    }

    const Mlp& network() const override { return net_; }

    std::vector<ParamSet> modes() const override
    {
        std::vector<ParamSet> out;
        for (const auto& m : modes_.modes)
            out.push_back(m.params);
        return out;
    }

    void learn(const TaskFeed& feed) override
    {
        const int t = feed.current();
        const auto& data = feed.task(t);
        announce_start(hooks_, t, modes_.params());
        if (t == 1 && distmax_) {
            initialize_task1(net_, data.train, modes_, mota_options(options_), seed_, mode_hook(hooks_, t));
            return;
        }
        const auto examples = examples_of(data.train, options_.masked);
        for (auto& m : modes_.modes)
            train_model(net_, m.params, examples, options_.train, seed_, t, m.index, nullptr,
                        epoch_hook(hooks_, t, m.index));
    }

private:
    bool distmax_;
    StrategyOptions options_;
    std::uint64_t seed_;
    RunHooks hooks_;
    Mlp net_;
    ModeSet modes_;
};

class MotaLearner : public Learner {
public:
    MotaLearner(const StrategyOptions& o, std::uint64_t seed, const RunHooks& hooks)
        : options_(o), seed_(seed), hooks_(hooks), net_(o.mode_network),
          modes_(ModeSet::replicate(initial_params(o.mode_network, seed, o), o.modes, o.beta_max, o.beta_min))
    {
    }

    const Mlp& network() const override { return net_; }

    std::vector<ParamSet> modes() const override
    {
        std::vector<ParamSet> out;
        for (const auto& m : modes_.modes)
            out.push_back(m.params);
        return out;
    }

    std::optional<CheckpointSelection> last_selection() const override { return selection_; }

    void learn(const TaskFeed& feed) override
    {
        const int t = feed.current();
        const auto& data = feed.task(t);
        const auto opts = mota_options(options_);
        announce_start(hooks_, t, modes_.params());
        if (t == 1) {
            initialize_task1(net_, data.train, modes_, opts, seed_, mode_hook(hooks_, t));
            selection_.reset();
        } else {
            selection_ = update_parameters(net_, data.train, data.val, modes_, opts, seed_, mode_hook(hooks_, t));
        }
        // the Fisher of task t anchors the next task's pull
        const auto examples = examples_of(data.train, options_.masked);
        for (auto& m : modes_.modes)
            m.fisher = estimate_fisher(net_, m.params, examples, options_.fisher_samples);
    }

    const ModeSet& mode_set() const { return modes_; }

private:
    StrategyOptions options_;
    std::uint64_t seed_;
    RunHooks hooks_;
    Mlp net_;
    ModeSet modes_;
    std::optional<CheckpointSelection> selection_;
};

} // namespace

std::unique_ptr<Learner> make_learner(Strategy strategy, const StrategyOptions& options, std::uint64_t seed,
                                      const RunHooks& hooks)
{
    switch (strategy) {
    case Strategy::single_task:
        return std::make_unique<SingleModelLearner>(SingleModelLearner::Kind::single_task, options, seed, hooks);
    case Strategy::naive_sequential:
        return std::make_unique<SingleModelLearner>(SingleModelLearner::Kind::naive, options, seed, hooks);
    case Strategy::ewc:
        return std::make_unique<SingleModelLearner>(SingleModelLearner::Kind::ewc, options, seed, hooks);
    case Strategy::multi_task:
        return std::make_unique<MultiTaskLearner>(options, seed, hooks);
    case Strategy::ensemble_distmax:
        return std::make_unique<EnsembleLearner>(true, options, seed, hooks);
    case Strategy::ensemble_seeds:
        return std::make_unique<EnsembleLearner>(false, options, seed, hooks);
    case Strategy::mota:
        if (options.modes < 1)
            throw ConfigError("mota.modes must be >= 1");
        return std::make_unique<MotaLearner>(options, seed, hooks);
    }
    throw ConfigError("unknown strategy");
}

StrategyRun run_learner(Learner& learner, Strategy tag, const TaskStream& stream, bool masked, std::uint64_t seed)
{
    const int tasks = stream.size();
    StrategyRun run;
    run.strategy = tag;
    run.seed = seed;
    run.accuracy = AccuracyMatrix(tasks);

    auto evaluate = [&](const std::vector<ParamSet>& modes, int v) {
        std::vector<const ParamSet*> ptrs;
        for (const auto& p : modes)
            ptrs.push_back(&p);
        return evaluate_accuracy(learner.network(), ptrs, stream.task(v).test, masked);
    };

    {
        const auto init = learner.modes();
        run.capacity = init.size() * init.front().size();
        for (int v = 1; v <= tasks; ++v)
            run.accuracy.set_init(v, evaluate(init, v));
    }

    SequentialTaskFeed sequential(stream);
    CumulativeTaskFeed cumulative(stream);
    TaskFeed& feed = learner.cumulative() ? static_cast<TaskFeed&>(cumulative) : sequential;
    for (int t = 1; t <= tasks; ++t) {
        sequential.advance(t);
        cumulative.advance(t);
        learner.learn(feed);
        auto modes = learner.modes();
        std::size_t capacity = 0;
        for (const auto& p : modes)
            capacity += p.size();
        if (capacity != run.capacity)
            throw InvariantError(fmt::format("capacity changed from {} to {} at task {}", run.capacity, capacity, t));
        for (int v = 1; v <= std::min(t + 1, tasks); ++v)
            run.accuracy.set(t, v, evaluate(modes, v));
        run.selections.push_back(learner.last_selection());
        run.snapshots.push_back(std::move(modes));
    }
    return run;
}

StrategyRun run_strategy(Strategy strategy, const TaskStream& stream, const StrategyOptions& options,
                         std::uint64_t seed, const RunHooks& hooks)
{
    auto learner = make_learner(strategy, options, seed, hooks);
    return run_learner(*learner, strategy, stream, options.masked, seed);
}

ParamSet train_mtl_reference(const TaskStream& stream, const NetworkSpec& spec, const StrategyOptions& options,
                             std::uint64_t seed)
{
    const Mlp net(spec);
    ParamSet params = initial_params(spec, seed, options);
    std::vector<const TaskDataset*> all;
    for (int v = 1; v <= stream.size(); ++v)
        all.push_back(&stream.task(v).train);
    const auto examples = examples_of(all, options.masked);
    train_model(net, params, examples, options.train, seed, stream.size(), 0);
    return params;
}

std::size_t strategy_capacity(Strategy strategy, const StrategyOptions& options)
{
    switch (strategy) {
    case Strategy::mota:
        return static_cast<std::size_t>(options.modes) * dims(options.mode_network);
    case Strategy::ensemble_distmax:
    case Strategy::ensemble_seeds:
        return static_cast<std::size_t>(options.ensemble_modes) * dims(options.mode_network);
    default:
        return dims(options.network);
    }
}

} // namespace mota
