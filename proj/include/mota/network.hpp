#pragma once

#include "mota/params.hpp"

#include <span>
#include <vector>

namespace mota {

/// Probability floor inside the log of the cross-entropy.
inline constexpr double kProbFloor = 1e-12;

/// One labelled input. `allowed` lists the classes the softmax is restricted
/// to (task-incremental head masking); empty means all classes.
struct Example {
    std::span<const double> x;
    int label = 0;
    std::span<const int> allowed;
};

struct LossAndGrad {
    double loss = 0.0;
    GradSet grads;
};

/// Stateless multilayer perceptron: hidden layers use the configured activation,
/// the output is a (optionally masked) softmax.
class Mlp {
public:
    explicit Mlp(NetworkSpec spec);

    const NetworkSpec& spec() const { return spec_; }
    std::size_t param_count() const { return dims(spec_); }

    std::vector<double> forward(const ParamSet& params, std::span<const double> x,
                                std::span<const int> allowed = {}) const;

    /// Batch-mean cross-entropy and its exact gradient.
    ///
    /// With `prob_override`, entry n is the distribution the loss is taken on
    /// for sample n (the joint distribution of several modes); the gradient is
    /// propagated through this network's own softmax as if the override were
    /// (1/N) * this network's output + constants. The caller applies the 1/N.
    LossAndGrad backward(const ParamSet& params, std::span<const Example> batch,
                         std::span<const std::vector<double>> prob_override = {}) const;

    double mean_loss(const ParamSet& params, std::span<const Example> batch) const;

private:
    void check_params(const ParamSet& params) const;

    NetworkSpec spec_;
    std::vector<LayerShape> shapes_;
};

/// -log(max(probs[y], kProbFloor)).
double cross_entropy(std::span<const double> probs, int y);

/// theta - lr * g.
ParamSet optimizer_step(const ParamSet& params, const GradSet& grads, double lr);

/// In-place variant used inside training loops.
void sgd_update(ParamSet& params, const GradSet& grads, double lr);

} // namespace mota
