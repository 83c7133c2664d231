#include "mota/mota_core.hpp"

#include "mota/errors.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include <fmt/format.h>

namespace mota {

namespace {

constexpr double kNormFloor = 1e-12;

double dot(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

void require_modes(std::span<const ParamSet* const> modes, const char* what)
{
    if (modes.empty())
        throw ArgumentError(fmt::format("{}: no modes", what));
    for (const ParamSet* m : modes)
        require_same_shape(*modes.front(), *m, what);
}

} // namespace

ModeSet ModeSet::replicate(const ParamSet& init, int n, double beta_max, double beta_min)
{
    if (n < 1)
        throw ArgumentError("a mode set needs at least one mode");
    ModeSet set;
    set.beta_max = beta_max;
    set.beta_min = beta_min;
    for (int i = 0; i < n; ++i) {
        ModeState m;
        m.index = i;
        m.params = init;
        m.anchor = init;
        m.fisher = ParamSet::zeros_like(init);
        m.checkpoints.push_back({0, init});
        set.modes.push_back(std::move(m));
    }
    return set;
}

std::vector<const ParamSet*> ModeSet::params() const
{
    std::vector<const ParamSet*> out;
    out.reserve(modes.size());
    for (const auto& m : modes)
        out.push_back(&m.params);
    return out;
}

std::vector<double> sample_simplex_weights(int n, Rng& rng)
{
    if (n <= 0)
        throw ArgumentError("sample_simplex_weights: N must be >= 1");
    std::exponential_distribution<double> expo(1.0);
    std::vector<double> w(static_cast<std::size_t>(n));
    double sum = 0.0;
    for (double& v : w) {
        v = expo(rng);
        sum += v;
    }
    for (double& v : w)
        v /= sum;
    return w;
}

ParamSet interpolate_modes(std::span<const ParamSet* const> modes, std::span<const double> alpha)
{
    require_modes(modes, "interpolate_modes");
    if (alpha.size() != modes.size())
        throw ArgumentError(fmt::format("interpolate_modes: {} weights for {} modes", alpha.size(), modes.size()));
    ParamSet out = ParamSet::zeros_like(*modes.front());
    auto o = out.values();
    for (std::size_t i = 0; i < modes.size(); ++i) {
        auto v = modes[i]->values();
        for (std::size_t d = 0; d < o.size(); ++d)
            o[d] += alpha[i] * v[d];
    }
    return out;
}

ParamSet interpolate_modes(const ModeSet& modes, std::span<const double> alpha)
{
    const auto p = modes.params();
    return interpolate_modes(p, alpha);
}

double pairwise_cosine(std::span<const ParamSet* const> modes)
{
    require_modes(modes, "pairwise_cosine");
    const std::size_t n = modes.size();
    if (n < 2)
        throw ArgumentError("pairwise_cosine needs at least two modes");
    const std::size_t layers = modes.front()->layer_count();
    std::vector<std::vector<double>> sq(n, std::vector<double>(layers));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t l = 0; l < layers; ++l) {
            const auto v = modes[i]->layer(l);
            sq[i][l] = dot(v, v);
            if (sq[i][l] == 0.0)
                throw NumericError(fmt::format("pairwise_cosine: layer {} of mode {} has zero norm", l, i));
        }
    double total = 0.0;
    for (std::size_t l = 0; l < layers; ++l)
        for (std::size_t i = 0; i + 1 < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                // sqrt(a*a) == a exactly, so identical layers give exactly 1
                const double c = dot(modes[i]->layer(l), modes[j]->layer(l)) / std::sqrt(sq[i][l] * sq[j][l]);
                total += std::clamp(c, -1.0, 1.0);
            }
    const double pairs = static_cast<double>(n * (n - 1)) / 2.0;
    return total / (static_cast<double>(layers) * pairs);
}

double pairwise_cosine(const ModeSet& modes)
{
    const auto p = modes.params();
    return pairwise_cosine(p);
}

GradSet cosine_similarity_gradient(std::span<const ParamSet* const> modes, std::size_t i)
{
    require_modes(modes, "cosine_similarity_gradient");
    const ParamSet& self = *modes[i];
    GradSet grad = ParamSet::zeros_like(self);
    const std::size_t layers = self.layer_count();
    const double inv_layers = 1.0 / static_cast<double>(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        const auto a = self.layer(l);
        auto g = grad.layer(l);
        const double aa = dot(a, a);
        const double na = std::sqrt(aa);
        for (std::size_t j = 0; j < modes.size(); ++j) {
            if (j == i)
                continue;
            const auto b = modes[j]->layer(l);
            const double nb = std::sqrt(dot(b, b));
            const double ab = dot(a, b);
            const double denom = na * nb;
            if (denom < kNormFloor) {
                // floored denominator is a constant
                for (std::size_t d = 0; d < a.size(); ++d)
                    g[d] += inv_layers * b[d] / kNormFloor;
                continue;
            }
            // d/da (a.b / (|a||b|)) = b/(|a||b|) - (a.b) a / (|a|^3 |b|)
            const double c1 = 1.0 / denom;
            const double c2 = ab / (aa * denom);
            for (std::size_t d = 0; d < a.size(); ++d)
                g[d] += inv_layers * (c1 * b[d] - c2 * a[d]);
        }
    }
    return grad;
}

void initialize_task1(const Mlp& net, const TaskDataset& train, ModeSet& modes, const MotaOptions& options,
                      std::uint64_t seed, const ModeObserver& observer)
{
    if (train.task_index != 1)
        throw StateError(fmt::format("initialize_task1 called for task {}", train.task_index));
    if (modes.size() == 0)
        throw ArgumentError("initialize_task1: empty mode set");
    const auto data = examples_of(train, options.masked);
    const std::size_t n = modes.size();
    const double lr = options.train.lr;
    Rng rng(derive_seed(seed, {seed_tag::simplex, 1}));
    std::vector<Example> batch;

    for (int e = 1; e <= options.train.epochs; ++e) {
        for (const auto& idx : batches(data.size(), options.train.batch_size, shuffle_seed(seed, 1, e, 0))) {
            batch.clear();
            for (std::size_t k : idx)
                batch.push_back(data[k]);
            const auto alpha = sample_simplex_weights(static_cast<int>(n), rng);
            const auto current = modes.params();
            const ParamSet blended = interpolate_modes(current, alpha);
            const auto task = net.backward(blended, batch);

            // all gradients are taken at the pre-step parameters
            std::vector<GradSet> grads;
            grads.reserve(n);
            for (std::size_t i = 0; i < n; ++i) {
                GradSet g = ParamSet::zeros_like(task.grads);
                auto gv = g.values();
                auto tv = task.grads.values();
                for (std::size_t d = 0; d < gv.size(); ++d)
                    gv[d] = alpha[i] * tv[d];
                if (n > 1 && modes.beta_max != 0.0) {
                    const auto cg = cosine_similarity_gradient(current, i);
                    auto cv = cg.values();
                    for (std::size_t d = 0; d < gv.size(); ++d)
                        gv[d] += modes.beta_max * cv[d];
                }
                grads.push_back(std::move(g));
            }
            for (std::size_t i = 0; i < n; ++i)
                sgd_update(modes.modes[i].params, grads[i], lr);
        }
        for (auto& m : modes.modes) {
            if (!m.params.all_finite())
                throw NumericError("initialize_task1 diverged");
            if (observer)
                observer(m.index, e, m.params);
        }
    }
    for (auto& m : modes.modes) {
        m.anchor = m.params;
        m.checkpoints.assign(1, Checkpoint{0, m.params});
    }
}

GradSet estimate_fisher(const Mlp& net, const ParamSet& params, std::span<const Example> data, std::size_t sample_cap)
{
    if (data.empty())
        throw ArgumentError("estimate_fisher: empty dataset");
    const std::size_t count = sample_cap == 0 ? data.size() : std::min(sample_cap, data.size());
    GradSet fisher = ParamSet::zeros_like(params);
    auto f = fisher.values();
    for (std::size_t k = 0; k < count; ++k) {
        const auto lg = net.backward(params, data.subspan(k, 1));
        auto g = lg.grads.values();
        for (std::size_t d = 0; d < f.size(); ++d)
            f[d] += g[d] * g[d];
    }
    const double inv = 1.0 / static_cast<double>(count);
    for (double& v : f)
        v *= inv;
    return fisher;
}

PenaltyValue ewc_penalty(const ParamSet& params, const ParamSet& anchor, const GradSet& fisher, double lambda)
{
    require_same_shape(params, anchor, "ewc_penalty");
    require_same_shape(params, fisher, "ewc_penalty");
    PenaltyValue out{0.0, ParamSet::zeros_like(params)};
    auto p = params.values();
    auto a = anchor.values();
    auto f = fisher.values();
    auto g = out.grad.values();
    for (std::size_t d = 0; d < p.size(); ++d) {
        if (f[d] < 0.0)
            throw InvariantError(fmt::format("negative Fisher entry {} at index {}", f[d], d));
        const double delta = p[d] - a[d];
        out.value += 0.5 * lambda * f[d] * delta * delta;
        g[d] = lambda * f[d] * delta;
    }
    return out;
}

std::vector<double> joint_inference(const Mlp& net, std::span<const ParamSet* const> modes, std::span<const double> x,
                                    std::span<const int> allowed)
{
    if (modes.empty())
        throw ArgumentError("joint_inference: no modes");
    std::vector<double> rho;
    for (const ParamSet* m : modes) {
        const auto p = net.forward(*m, x, allowed);
        if (rho.empty())
            rho = p;
        else
            for (std::size_t k = 0; k < p.size(); ++k)
                rho[k] += p[k];
    }
    const double inv = 1.0 / static_cast<double>(modes.size());
    for (double& v : rho)
        v *= inv;
    return rho;
}

std::vector<double> joint_inference(const Mlp& net, const ModeSet& modes, std::span<const double> x,
                                    std::span<const int> allowed)
{
    const auto p = modes.params();
    return joint_inference(net, p, x, allowed);
}

namespace {

// Per-mode, per-checkpoint probability of the true label on every validation
// sample, plus the unit-lambda EWC drift of every checkpoint.
struct SelectionTables {
    std::vector<std::vector<std::vector<double>>> label_prob; // [mode][checkpoint][sample]
    std::vector<std::vector<double>> drift;                   // [mode][checkpoint]
};

SelectionTables build_tables(const Mlp& net, const ModeSet& modes, std::span<const Example> val,
                             const std::vector<std::vector<std::size_t>>& candidates)
{
    SelectionTables t;
    t.label_prob.resize(modes.size());
    t.drift.resize(modes.size());
    for (std::size_t i = 0; i < modes.size(); ++i) {
        const auto& m = modes.modes[i];
        for (std::size_t c : candidates[i]) {
            const auto& ck = m.checkpoints.at(c).params;
            std::vector<double> probs(val.size());
            for (std::size_t n = 0; n < val.size(); ++n)
                probs[n] = net.forward(ck, val[n].x, val[n].allowed)[static_cast<std::size_t>(val[n].label)];
            t.label_prob[i].push_back(std::move(probs));
            t.drift[i].push_back(ewc_penalty(ck, m.anchor, m.fisher, 1.0).value);
        }
    }
    return t;
}

double tabled_objective(const SelectionTables& t, std::span<const std::size_t> pick, double drift_weight)
{
    const std::size_t modes = t.label_prob.size();
    const std::size_t samples = t.label_prob.front().front().size();
    const double inv_modes = 1.0 / static_cast<double>(modes);
    double ce = 0.0;
    for (std::size_t n = 0; n < samples; ++n) {
        double rho = 0.0;
        for (std::size_t i = 0; i < modes; ++i)
            rho += t.label_prob[i][pick[i]][n];
        ce += -std::log(std::max(rho * inv_modes, kProbFloor));
    }
    ce /= static_cast<double>(samples);
    double drift = 0.0;
    for (std::size_t i = 0; i < modes; ++i)
        drift += t.drift[i][pick[i]];
    return ce + drift_weight * drift;
}

} // namespace

CheckpointSelection backtrack_select(const Mlp& net, const ModeSet& modes, std::span<const Example> val,
                                     double drift_weight, std::size_t enumeration_cap)
{
    if (modes.size() == 0)
        throw ArgumentError("backtrack_select: empty mode set");
    if (val.empty())
        throw ArgumentError("backtrack_select: empty validation split");
    std::vector<std::vector<std::size_t>> candidates(modes.size());
    std::size_t combos = 1;
    bool overflow = false;
    for (std::size_t i = 0; i < modes.size(); ++i) {
        const auto& ck = modes.modes[i].checkpoints;
        if (ck.empty())
            throw StateError(fmt::format("mode {} has no checkpoints", i));
        for (std::size_t c = 0; c < ck.size(); ++c)
            candidates[i].push_back(c);
        if (!overflow) {
            combos *= ck.size();
            overflow = combos > enumeration_cap;
        }
    }
    const auto tables = build_tables(net, modes, val, candidates);
    const std::size_t n = modes.size();
    std::vector<std::size_t> best(n, 0);
    double best_value = 0.0;
    bool exhaustive = true;

    if (!overflow) {
        // odometer over checkpoint indices, last mode fastest: lexicographic order
        std::vector<std::size_t> pick(n, 0);
        best_value = tabled_objective(tables, pick, drift_weight);
        best = pick;
        while (true) {
            bool advanced = false;
            for (std::size_t pos = n; pos-- > 0;) {
                if (++pick[pos] < candidates[pos].size()) {
                    advanced = true;
                    break;
                }
                pick[pos] = 0;
            }
            if (!advanced)
                break;
            const double v = tabled_objective(tables, pick, drift_weight);
            if (v < best_value) {
                best_value = v;
                best = pick;
            }
        }
    } else {
        exhaustive = false;
        std::clog << fmt::format("warning: {} checkpoint combinations exceed the cap of {}; using per-mode greedy "
                                 "selection\n",
                                 combos, enumeration_cap);
        std::vector<std::size_t> base(n);
        for (std::size_t i = 0; i < n; ++i)
            base[i] = candidates[i].size() - 1;
        for (std::size_t i = 0; i < n; ++i) {
            auto pick = base;
            double local_best = 0.0;
            for (std::size_t c = 0; c < candidates[i].size(); ++c) {
                pick[i] = c;
                const double v = tabled_objective(tables, pick, drift_weight);
                if (c == 0 || v < local_best) {
                    local_best = v;
                    best[i] = c;
                }
            }
        }
        best_value = tabled_objective(tables, best, drift_weight);
    }

    CheckpointSelection sel;
    sel.exhaustive = exhaustive;
    sel.objective = best_value;
    for (std::size_t i = 0; i < n; ++i)
        sel.epochs.push_back(modes.modes[i].checkpoints[best[i]].epoch);
    return sel;
}

double selection_objective(const Mlp& net, const ModeSet& modes, std::span<const Example> val,
                           std::span<const int> epochs, double drift_weight)
{
    if (epochs.size() != modes.size())
        throw ArgumentError("selection_objective: one epoch per mode is required");
    std::vector<std::vector<std::size_t>> candidates(modes.size());
    for (std::size_t i = 0; i < modes.size(); ++i) {
        const auto& ck = modes.modes[i].checkpoints;
        const auto it = std::find_if(ck.begin(), ck.end(), [&](const Checkpoint& c) { return c.epoch == epochs[i]; });
        if (it == ck.end())
            throw IndexError(fmt::format("mode {} has no checkpoint for epoch {}", i, epochs[i]));
        candidates[i].push_back(static_cast<std::size_t>(it - ck.begin()));
    }
    const auto tables = build_tables(net, modes, val, candidates);
    const std::vector<std::size_t> pick(modes.size(), 0);
    return tabled_objective(tables, pick, drift_weight);
}

void apply_selection(ModeSet& modes, const CheckpointSelection& selection)
{
    if (selection.epochs.size() != modes.size())
        throw ArgumentError("apply_selection: one epoch per mode is required");
    for (std::size_t i = 0; i < modes.size(); ++i) {
        auto& m = modes.modes[i];
        const auto it = std::find_if(m.checkpoints.begin(), m.checkpoints.end(),
                                     [&](const Checkpoint& c) { return c.epoch == selection.epochs[i]; });
        if (it == m.checkpoints.end())
            throw IndexError(fmt::format("mode {} has no checkpoint for epoch {}", i, selection.epochs[i]));
        m.params = it->params;
    }
}

CheckpointSelection update_parameters(const Mlp& net, const TaskDataset& train, const TaskDataset& val, ModeSet& modes,
                                      const MotaOptions& options, std::uint64_t seed, const ModeObserver& observer)
{
    if (train.task_index == 1)
        throw StateError("update_parameters called for task 1; the first task goes through initialize_task1");
    if (modes.size() == 0)
        throw ArgumentError("update_parameters: empty mode set");
    const int t = train.task_index;
    const auto data = examples_of(train, options.masked);
    const auto val_data = examples_of(val, options.masked);
    const std::size_t n = modes.size();
    const double inv_n = 1.0 / static_cast<double>(n);
    const std::size_t classes = static_cast<std::size_t>(net.spec().output_dim);

    for (auto& m : modes.modes) {
        m.anchor = m.params;
        m.checkpoints.assign(1, Checkpoint{0, m.params});
    }

    std::vector<std::vector<double>> others(data.size(), std::vector<double>(classes));
    std::vector<Example> batch;
    std::vector<std::vector<double>> rho;
    for (int e = 1; e <= options.train.epochs; ++e) {
        for (std::size_t i = 0; i < n; ++i) {
            auto& mode = modes.modes[i];
            // the other modes are constants during this mode's pass
            for (std::size_t k = 0; k < data.size(); ++k) {
                std::fill(others[k].begin(), others[k].end(), 0.0);
                for (std::size_t j = 0; j < n; ++j) {
                    if (j == i)
                        continue;
                    const auto p = net.forward(modes.modes[j].params, data[k].x, data[k].allowed);
                    for (std::size_t c = 0; c < classes; ++c)
                        others[k][c] += p[c];
                }
            }
            const EwcAnchor pull{&mode.anchor, &mode.fisher, modes.beta_min};
            for (const auto& idx : batches(data.size(), options.train.batch_size, shuffle_seed(seed, t, e, static_cast<int>(i)))) {
                batch.clear();
                rho.clear();
                for (std::size_t k : idx) {
                    batch.push_back(data[k]);
                    auto p = net.forward(mode.params, data[k].x, data[k].allowed);
                    for (std::size_t c = 0; c < classes; ++c)
                        p[c] = (p[c] + others[k][c]) * inv_n;
                    rho.push_back(std::move(p));
                }
                auto lg = net.backward(mode.params, batch, rho);
                for (double& g : lg.grads.values())
                    g *= inv_n;
                proximal_ewc_step(mode.params, lg.grads, pull, options.train.lr);
            }
            if (!mode.params.all_finite())
                throw NumericError("update_parameters diverged");
        }
        for (auto& m : modes.modes) {
            m.checkpoints.push_back({e, m.params});
            if (observer)
                observer(m.index, e, m.params);
        }
    }

    const auto selection = backtrack_select(net, modes, val_data, options.drift_weight, options.enumeration_cap);
    apply_selection(modes, selection);
    return selection;
}

} // namespace mota
