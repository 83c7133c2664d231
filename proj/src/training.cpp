#include "mota/training.hpp"

#include "mota/errors.hpp"
#include "mota/rng.hpp"
#include "mota/stream.hpp"

#include <vector>

namespace mota {

std::uint64_t shuffle_seed(std::uint64_t base, int task, int epoch, int mode)
{
    return derive_seed(base, {seed_tag::shuffle, static_cast<std::uint64_t>(task), static_cast<std::uint64_t>(epoch),
                              static_cast<std::uint64_t>(mode)});
}

void proximal_ewc_step(ParamSet& params, const GradSet& data_grad, const EwcAnchor& penalty, double lr)
{
    if (!(lr > 0.0))
        throw ArgumentError("learning rate must be positive");
    require_same_shape(params, data_grad, "proximal_ewc_step");
    require_same_shape(params, *penalty.anchor, "proximal_ewc_step");
    require_same_shape(params, *penalty.fisher, "proximal_ewc_step");
    auto p = params.values();
    auto g = data_grad.values();
    auto a = penalty.anchor->values();
    auto f = penalty.fisher->values();
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double k = lr * penalty.lambda * f[i];
        if (k == 0.0)
            p[i] -= lr * g[i];
        else
            p[i] = (p[i] - lr * g[i] + k * a[i]) / (1.0 + k);
    }
}

void train_model(const Mlp& net, ParamSet& params, std::span<const Example> data, const TrainOptions& options,
                 std::uint64_t seed, int task, int mode, const EwcAnchor* penalty, const EpochObserver& observer)
{
    if (options.epochs < 0)
        throw ArgumentError("epochs must be >= 0");
    std::vector<Example> batch;
    for (int e = 1; e <= options.epochs; ++e) {
        for (const auto& idx : batches(data.size(), options.batch_size, shuffle_seed(seed, task, e, mode))) {
            batch.clear();
            for (std::size_t i : idx)
                batch.push_back(data[i]);
            const auto lg = net.backward(params, batch);
            if (penalty != nullptr && penalty->lambda != 0.0)
                proximal_ewc_step(params, lg.grads, *penalty, options.lr);
            else
                sgd_update(params, lg.grads, options.lr);
        }
        if (!params.all_finite())
            throw NumericError("training diverged to non-finite parameters");
        if (observer)
            observer(e, params);
    }
}

} // namespace mota
