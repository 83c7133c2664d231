#include "mota/network.hpp"

#include "mota/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace mota {

namespace {

struct Workspace {
    // pre[l] holds z_l, act[l] holds the input to layer l (act[0] = x).
    std::vector<std::vector<double>> pre;
    std::vector<std::vector<double>> act;
    std::vector<double> probs;
};

double activate(Activation a, double z)
{
    return a == Activation::relu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

double activate_grad(Activation a, double z, double out)
{
    return a == Activation::relu ? (z > 0.0 ? 1.0 : 0.0) : 1.0 - out * out;
}

void masked_softmax(std::span<const double> logits, std::span<const int> allowed, std::vector<double>& probs)
{
    const std::size_t k = logits.size();
    probs.assign(k, 0.0);
    double mx = -std::numeric_limits<double>::infinity();
    if (allowed.empty()) {
        for (double z : logits)
            mx = std::max(mx, z);
        double sum = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            probs[c] = std::exp(logits[c] - mx);
            sum += probs[c];
        }
        for (double& p : probs)
            p /= sum;
        return;
    }
    for (int c : allowed) {
        if (c < 0 || static_cast<std::size_t>(c) >= k)
            throw IndexError(fmt::format("mask class {} outside [0, {})", c, k));
        mx = std::max(mx, logits[c]);
    }
    double sum = 0.0;
    for (int c : allowed) {
        probs[c] = std::exp(logits[c] - mx);
        sum += probs[c];
    }
    for (int c : allowed)
        probs[c] /= sum;
}

void run_forward(const std::vector<LayerShape>& shapes, Activation act, const ParamSet& params,
                 std::span<const double> x, std::span<const int> allowed, Workspace& ws)
{
    const std::size_t layers = shapes.size();
    ws.pre.resize(layers);
    ws.act.resize(layers);
    ws.act[0].assign(x.begin(), x.end());
    for (std::size_t l = 0; l < layers; ++l) {
        const auto& s = shapes[l];
        const auto w = params.weights(l);
        const auto b = params.bias(l);
        const auto& in = ws.act[l];
        auto& z = ws.pre[l];
        z.assign(static_cast<std::size_t>(s.out), 0.0);
        for (int o = 0; o < s.out; ++o) {
            const double* row = w.data() + static_cast<std::size_t>(o) * static_cast<std::size_t>(s.in);
            double acc = b[static_cast<std::size_t>(o)];
            for (int i = 0; i < s.in; ++i)
                acc += row[i] * in[static_cast<std::size_t>(i)];
            if (!std::isfinite(acc))
                throw NumericError(fmt::format("non-finite pre-activation in layer {}", l));
            z[static_cast<std::size_t>(o)] = acc;
        }
        if (l + 1 < layers) {
            auto& next = ws.act[l + 1];
            next.resize(z.size());
            for (std::size_t o = 0; o < z.size(); ++o)
                next[o] = activate(act, z[o]);
        }
    }
    masked_softmax(ws.pre.back(), allowed, ws.probs);
}

void check_example(const Example& ex, std::size_t input_dim, int classes)
{
    if (ex.x.size() != input_dim)
        throw ShapeError(fmt::format("input has {} entries, network expects {}", ex.x.size(), input_dim));
    if (ex.label < 0 || ex.label >= classes)
        throw IndexError(fmt::format("label {} outside [0, {})", ex.label, classes));
    if (!ex.allowed.empty() && std::find(ex.allowed.begin(), ex.allowed.end(), ex.label) == ex.allowed.end())
        throw IndexError(fmt::format("label {} is masked out", ex.label));
}

} // namespace

Mlp::Mlp(NetworkSpec spec)
    : spec_(std::move(spec))
{
    spec_.validate();
    shapes_ = spec_.layer_shapes();
}

void Mlp::check_params(const ParamSet& params) const
{
    if (params.shapes() != shapes_)
        throw ShapeError("parameter layout does not match the network");
}

std::vector<double> Mlp::forward(const ParamSet& params, std::span<const double> x,
                                 std::span<const int> allowed) const
{
    check_params(params);
    if (x.size() != static_cast<std::size_t>(spec_.input_dim))
        throw ShapeError(fmt::format("input has {} entries, network expects {}", x.size(), spec_.input_dim));
    for (double v : x)
        if (!std::isfinite(v))
            throw NumericError("non-finite input");
    Workspace ws;
    run_forward(shapes_, spec_.activation, params, x, allowed, ws);
    return ws.probs;
}

LossAndGrad Mlp::backward(const ParamSet& params, std::span<const Example> batch,
                          std::span<const std::vector<double>> prob_override) const
{
    check_params(params);
    if (batch.empty())
        throw ArgumentError("backward: empty batch");
    if (!prob_override.empty() && prob_override.size() != batch.size())
        throw ShapeError("backward: one override distribution per sample is required");

    LossAndGrad out{0.0, ParamSet::zeros_like(params)};
    Workspace ws;
    std::vector<double> delta;
    std::vector<double> delta_prev;
    const std::size_t layers = shapes_.size();
    const auto classes = static_cast<std::size_t>(spec_.output_dim);

    for (std::size_t n = 0; n < batch.size(); ++n) {
        const Example& ex = batch[n];
        check_example(ex, static_cast<std::size_t>(spec_.input_dim), spec_.output_dim);
        run_forward(shapes_, spec_.activation, params, ex.x, ex.allowed, ws);
        const auto y = static_cast<std::size_t>(ex.label);

        // dL/dz at the output: (p - e_y), scaled by p_y / rho_y for a joint loss.
        double scale = 1.0;
        if (prob_override.empty()) {
            out.loss += cross_entropy(ws.probs, ex.label);
        } else {
            const auto& rho = prob_override[n];
            if (rho.size() != classes)
                throw ShapeError("backward: override distribution has the wrong class count");
            out.loss += cross_entropy(rho, ex.label);
            scale = ws.probs[y] / std::max(rho[y], kProbFloor);
        }
        // Masked classes have p_c = 0 and c != y, so their logits get no gradient.
        delta.assign(classes, 0.0);
        for (std::size_t c = 0; c < classes; ++c)
            delta[c] = scale * (ws.probs[c] - (c == y ? 1.0 : 0.0));

        for (std::size_t l = layers; l-- > 0;) {
            const auto& s = shapes_[l];
            const auto in_dim = static_cast<std::size_t>(s.in);
            const auto& in = ws.act[l];
            auto gw = out.grads.weights(l);
            auto gb = out.grads.bias(l);
            for (std::size_t o = 0; o < delta.size(); ++o) {
                const double d = delta[o];
                gb[o] += d;
                if (d == 0.0)
                    continue;
                double* row = gw.data() + o * in_dim;
                for (std::size_t i = 0; i < in_dim; ++i)
                    row[i] += d * in[i];
            }
            if (l == 0)
                break;
            const auto w = params.weights(l);
            delta_prev.assign(in_dim, 0.0);
            for (std::size_t o = 0; o < delta.size(); ++o) {
                const double d = delta[o];
                if (d == 0.0)
                    continue;
                const double* row = w.data() + o * in_dim;
                for (std::size_t i = 0; i < in_dim; ++i)
                    delta_prev[i] += row[i] * d;
            }
            const auto& z = ws.pre[l - 1];
            for (std::size_t i = 0; i < in_dim; ++i)
                delta_prev[i] *= activate_grad(spec_.activation, z[i], in[i]);
            delta.swap(delta_prev);
        }
    }

    const double inv = 1.0 / static_cast<double>(batch.size());
    out.loss *= inv;
    for (double& g : out.grads.values())
        g *= inv;
    return out;
}

double Mlp::mean_loss(const ParamSet& params, std::span<const Example> batch) const
{
    check_params(params);
    if (batch.empty())
        throw ArgumentError("mean_loss: empty batch");
    Workspace ws;
    double total = 0.0;
    for (const Example& ex : batch) {
        check_example(ex, static_cast<std::size_t>(spec_.input_dim), spec_.output_dim);
        run_forward(shapes_, spec_.activation, params, ex.x, ex.allowed, ws);
        total += cross_entropy(ws.probs, ex.label);
    }
    return total / static_cast<double>(batch.size());
}

double cross_entropy(std::span<const double> probs, int y)
{
    if (y < 0 || static_cast<std::size_t>(y) >= probs.size())
        throw IndexError(fmt::format("label {} outside [0, {})", y, probs.size()));
    return -std::log(std::max(probs[static_cast<std::size_t>(y)], kProbFloor));
}

ParamSet optimizer_step(const ParamSet& params, const GradSet& grads, double lr)
{
    ParamSet out = params;
    sgd_update(out, grads, lr);
    return out;
}

void sgd_update(ParamSet& params, const GradSet& grads, double lr)
{
    if (!(lr > 0.0))
        throw ArgumentError("learning rate must be positive");
    require_same_shape(params, grads, "optimizer_step");
    auto p = params.values();
    auto g = grads.values();
    for (std::size_t i = 0; i < p.size(); ++i)
        p[i] -= lr * g[i];
}

} // namespace mota
