#pragma once

#include "mota/network.hpp"

#include <cstdint>
#include <functional>
#include <span>

namespace mota {

struct TrainOptions {
    int epochs = 40;
    double lr = 0.05;
    int batch_size = 64;
};

/// Quadratic pull of theta towards an anchor, weighted per entry by a Fisher
/// diagonal: (lambda/2) sum F (theta - anchor)^2.
struct EwcAnchor {
    const ParamSet* anchor = nullptr;
    const ParamSet* fisher = nullptr;
    double lambda = 0.0;
};

/// Called after every epoch with (epoch, params); epoch numbering starts at 1.
using EpochObserver = std::function<void(int, const ParamSet&)>;

/// Shuffle seed of one (task, epoch, mode) pass. Independent of the strategy
/// so that strategies that coincide in the limit share their batch order.
std::uint64_t shuffle_seed(std::uint64_t base, int task, int epoch, int mode);

/// Gradient step on the data term with the quadratic anchor handled
/// implicitly: theta' = (theta - lr*g + lr*lambda*F*anchor) / (1 + lr*lambda*F).
/// Reduces to theta - lr*g when lambda*F = 0.
void proximal_ewc_step(ParamSet& params, const GradSet& data_grad, const EwcAnchor& penalty, double lr);

/// Mini-batch gradient descent on `data`; when `penalty` is set its quadratic
/// term is applied through proximal_ewc_step.
void train_model(const Mlp& net, ParamSet& params, std::span<const Example> data, const TrainOptions& options,
                 std::uint64_t seed, int task, int mode, const EwcAnchor* penalty = nullptr,
                 const EpochObserver& observer = {});

} // namespace mota
