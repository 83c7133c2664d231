#include "mota/errors.hpp"
#include "mota/metrics.hpp"
#include "mota/mota_core.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace mota;

namespace {

ParamSet scalar(double v)
{
    ParamSet p({LayerShape{1, 0}});
    p.values()[0] = v;
    return p;
}

ParamSet pair(double w, double b)
{
    ParamSet p({LayerShape{1, 1}});
    p.values()[0] = w;
    p.values()[1] = b;
    return p;
}

double max_abs_diff(const ParamSet& a, const ParamSet& b)
{
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k)
        m = std::max(m, std::abs(a.values()[k] - b.values()[k]));
    return m;
}

MotaOptions small_options(int epochs)
{
    MotaOptions o;
    o.train.epochs = epochs;
    o.train.lr = 0.05;
    o.train.batch_size = 32;
    return o;
}

// Two modes after task 1 on a small stream, Fisher of task 1 in place.
struct Prepared {
    TaskStream stream;
    Mlp net;
    ModeSet modes;
};

Prepared prepare(ShiftKind kind, Activation act, std::uint64_t seed, int epochs, double beta_min = 1000.0)
{
    StreamSpec ss;
    ss.kind = kind;
    ss.tasks = 2;
    ss.samples_per_class = 60;
    ss.input_dim = 6;
    ss.seed = seed;
    auto stream = make_stream(ss);
    Mlp net(NetworkSpec{6, {8}, stream.global_classes, act});
    auto modes = ModeSet::replicate(init_params(net.spec(), seed), 2, 100.0, beta_min);
    const auto opts = small_options(epochs);
    initialize_task1(net, stream.task(1).train, modes, opts, seed);
    const auto ex = examples_of(stream.task(1).train, true);
    for (auto& m : modes.modes)
        m.fisher = estimate_fisher(net, m.params, ex, 0);
    return {std::move(stream), std::move(net), std::move(modes)};
}

} // namespace

TEST_CASE("simplex weights")
{
    Rng rng(1);
    CHECK(sample_simplex_weights(1, rng) == std::vector<double>{1.0});
    CHECK_THROWS_AS(sample_simplex_weights(0, rng), ArgumentError);
    double mean = 0.0;
    const int draws = 100000;
    for (int k = 0; k < draws; ++k) {
        const auto a = sample_simplex_weights(2, rng);
        mean += a[0];
    }
    CHECK(std::abs(mean / draws - 0.5) < 0.01);
    for (int k = 0; k < 100; ++k) {
        const auto a = sample_simplex_weights(5, rng);
        double s = 0.0;
        for (double v : a) {
            CHECK(v >= 0.0);
            s += v;
        }
        CHECK(std::abs(s - 1.0) < 1e-12);
    }
}

TEST_CASE("interpolation of modes")
{
    const auto a = scalar(0.0);
    const auto b = scalar(2.0);
    const std::vector<const ParamSet*> m{&a, &b};
    const std::vector<double> w{0.25, 0.75};
    CHECK(interpolate_modes(m, w).values()[0] == 1.5);
    const std::vector<double> hot{0.0, 1.0};
    CHECK(interpolate_modes(m, hot) == b);
    const std::vector<const ParamSet*> same{&b, &b};
    const std::vector<double> w3{0.3, 0.7};
    CHECK(std::abs(interpolate_modes(same, w3).values()[0] - 2.0) < 1e-15);
    const std::vector<double> bad{1.0};
    CHECK_THROWS_AS(interpolate_modes(m, bad), ArgumentError);
}

TEST_CASE("pairwise cosine of hand cases")
{
    const auto a = pair(1, 0);
    const auto b = pair(0, 1);
    const auto c = pair(1, 1);
    const std::vector<const ParamSet*> orth{&a, &b};
    CHECK(pairwise_cosine(orth) == 0.0);
    const std::vector<const ParamSet*> three{&a, &b, &c};
    CHECK(std::abs(pairwise_cosine(three) - std::sqrt(2.0) / 3.0) < 1e-12);
    CHECK(pairwise_cosine(three) == doctest::Approx(0.4714).epsilon(1e-4));

    const auto p = init_params(NetworkSpec{5, {7, 4}, 3, Activation::relu}, 4);
    const std::vector<const ParamSet*> same{&p, &p, &p};
    CHECK(pairwise_cosine(same) == 1.0);

    const auto z = pair(0, 0);
    const std::vector<const ParamSet*> zero{&a, &z};
    CHECK_THROWS_AS(pairwise_cosine(zero), NumericError);
}

TEST_CASE("cosine gradient matches finite differences")
{
    NetworkSpec spec{3, {4}, 2, Activation::relu};
    auto p0 = init_params(spec, 1);
    auto p1 = init_params(spec, 2);
    auto p2 = init_params(spec, 3);
    std::vector<ParamSet*> mut{&p0, &p1, &p2};
    const std::vector<const ParamSet*> view{&p0, &p1, &p2};
    for (std::size_t i = 0; i < 3; ++i) {
        const auto g = cosine_similarity_gradient(view, i);
        auto v = mut[i]->values();
        for (std::size_t k = 0; k < v.size(); ++k) {
            const double keep = v[k];
            const double h = 1e-6;
            v[k] = keep + h;
            const double up = pairwise_cosine(view);
            v[k] = keep - h;
            const double down = pairwise_cosine(view);
            v[k] = keep;
            // pairwise_cosine averages 3 pairs; mode i appears in 2 of them
            const double fd = 3.0 * (up - down) / (2.0 * h);
            CHECK(std::abs(fd - g.values()[k]) < 1e-6 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST_CASE("ewc penalty values")
{
    const auto theta = scalar(0.1);
    const auto anchor = scalar(0.0);
    const auto fisher = scalar(2.0);
    const auto pv = ewc_penalty(theta, anchor, fisher, 1000.0);
    CHECK(std::abs(pv.value - 10.0) < 1e-12);
    CHECK(std::abs(pv.grad.values()[0] - 200.0) < 1e-12);

    const auto same = ewc_penalty(theta, theta, fisher, 1000.0);
    CHECK(same.value == 0.0);
    CHECK(same.grad.values()[0] == 0.0);

    CHECK_THROWS_AS(ewc_penalty(theta, anchor, scalar(-1.0), 1.0), InvariantError);
}

TEST_CASE("ewc penalty gradient matches finite differences")
{
    NetworkSpec spec{3, {4}, 2, Activation::relu};
    Rng rng(77);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    for (int rep = 0; rep < 20; ++rep) {
        auto theta = init_params(spec, 10 + static_cast<std::uint64_t>(rep));
        const auto anchor = init_params(spec, 500 + static_cast<std::uint64_t>(rep));
        auto fisher = ParamSet::zeros_like(theta);
        for (double& f : fisher.values())
            f = u(rng);
        const double lambda = 1.0 + 10.0 * u(rng);
        const auto pv = ewc_penalty(theta, anchor, fisher, lambda);
        auto v = theta.values();
        for (std::size_t k = 0; k < v.size(); ++k) {
            const double keep = v[k];
            const double h = 1e-6;
            v[k] = keep + h;
            const double up = ewc_penalty(theta, anchor, fisher, lambda).value;
            v[k] = keep - h;
            const double down = ewc_penalty(theta, anchor, fisher, lambda).value;
            v[k] = keep;
            const double fd = (up - down) / (2.0 * h);
            CHECK(std::abs(fd - pv.grad.values()[k]) <= 1e-6 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST_CASE("joint inference averages the mode outputs")
{
    Mlp net(NetworkSpec{2, {}, 2, Activation::relu});
    ParamSet sure({LayerShape{2, 2}});
    sure.weights(0)[0] = 1000.0;
    ParamSet flat({LayerShape{2, 2}});
    const std::vector<double> x{1.0, 0.0};
    CHECK(net.forward(sure, x)[1] == 0.0);
    const std::vector<const ParamSet*> m{&sure, &flat};
    const auto q = joint_inference(net, m, x);
    CHECK(q[0] == 0.75);
    CHECK(q[1] == 0.25);

    const auto p = init_params(NetworkSpec{2, {3}, 2, Activation::relu}, 1);
    Mlp net2(NetworkSpec{2, {3}, 2, Activation::relu});
    const std::vector<const ParamSet*> twin{&p, &p};
    const auto j = joint_inference(net2, twin, x);
    const auto s = net2.forward(p, x);
    CHECK(std::abs(j[0] - s[0]) < 1e-15);
    CHECK(std::abs(j[1] - s[1]) < 1e-15);
}

TEST_CASE("fisher of a single sample is its squared gradient")
{
    Mlp net(NetworkSpec{3, {4}, 2, Activation::tanh});
    const auto p = init_params(net.spec(), 5);
    const std::vector<double> x{0.2, -0.4, 1.0};
    const std::vector<Example> one{{x, 1, {}}};
    const auto f = estimate_fisher(net, p, one, 0);
    const auto g = net.backward(p, one).grads;
    for (std::size_t k = 0; k < f.size(); ++k)
        CHECK(std::abs(f.values()[k] - g.values()[k] * g.values()[k]) < 1e-15);

    std::vector<std::vector<double>> xs{{1, 2, 3}, {-1, 0, 1}, {0.5, 0.5, -2}};
    std::vector<Example> many;
    for (std::size_t k = 0; k < xs.size(); ++k)
        many.push_back({xs[k], static_cast<int>(k % 2), {}});
    const auto fm = estimate_fisher(net, p, many, 0);
    for (double v : fm.values()) {
        CHECK(v >= 0.0);
        CHECK(std::isfinite(v));
    }
}

TEST_CASE("fisher vanishes where every sample has zero gradient")
{
    Mlp net(NetworkSpec{2, {}, 2, Activation::relu});
    ParamSet p({LayerShape{2, 2}});
    p.bias(0)[0] = 800.0;
    const std::vector<double> x{0.0, 0.0};
    const std::vector<Example> data{{x, 0, {}}, {x, 0, {}}};
    const auto f = estimate_fisher(net, p, data, 0);
    for (double v : f.values())
        CHECK(v == 0.0);
}

TEST_CASE("initialisation refuses later tasks and adaptation refuses task 1")
{
    const auto s = make_stream(ShiftKind::task_il, 2, 2, 30, 1);
    Mlp net(NetworkSpec{16, {4}, 4, Activation::relu});
    auto modes = ModeSet::replicate(init_params(net.spec(), 1), 2, 100.0, 1000.0);
    const auto o = small_options(1);
    CHECK_THROWS_AS(initialize_task1(net, s.task(2).train, modes, o, 1), StateError);
    CHECK_THROWS_AS(update_parameters(net, s.task(1).train, s.task(1).val, modes, o, 1), StateError);
}

TEST_CASE("distance maximisation lowers the cosine; without it the modes stay aligned")
{
    const auto s = make_stream(ShiftKind::task_il, 1, 2, 60, 3);
    Mlp net(NetworkSpec{16, {8}, 2, Activation::relu});
    const auto init = init_params(net.spec(), 3);
    const auto o = small_options(5);

    auto plain = ModeSet::replicate(init, 2, 0.0, 1000.0);
    initialize_task1(net, s.task(1).train, plain, o, 3);
    auto pushed = ModeSet::replicate(init, 2, 100.0, 1000.0);
    initialize_task1(net, s.task(1).train, pushed, o, 3);
    CHECK(pairwise_cosine(plain) > 0.95);
    CHECK(pairwise_cosine(pushed) < pairwise_cosine(plain));

    // one mode: the distance term is skipped and training is plain
    auto single = ModeSet::replicate(init, 1, 100.0, 1000.0);
    initialize_task1(net, s.task(1).train, single, o, 3);
    CHECK(single.modes[0].params.all_finite());
    CHECK_FALSE(single.modes[0].params == init);
}

TEST_CASE("adaptation with zero epochs changes nothing")
{
    auto prep = prepare(ShiftKind::task_il, Activation::relu, 5, 2);
    const auto before = prep.modes.params();
    std::vector<ParamSet> copy;
    for (const auto* p : before)
        copy.push_back(*p);
    const auto sel = update_parameters(prep.net, prep.stream.task(2).train, prep.stream.task(2).val, prep.modes,
                                       small_options(0), 5);
    CHECK(sel.epochs == std::vector<int>{0, 0});
    for (std::size_t i = 0; i < 2; ++i)
        CHECK(prep.modes.modes[i].params == copy[i]);
}

TEST_CASE("an overwhelming pull keeps the modes at their anchors")
{
    auto prep = prepare(ShiftKind::instance_il, Activation::tanh, 8, 3, 1e12);
    std::vector<ParamSet> anchors;
    for (const auto& m : prep.modes.modes)
        anchors.push_back(m.params);
    const auto val = examples_of(prep.stream.task(2).val, true);
    const auto views = prep.modes.params();
    double before = 0.0;
    for (const auto& e : val)
        before += cross_entropy(joint_inference(prep.net, views, e.x, e.allowed), e.label);

    auto opts = small_options(3);
    update_parameters(prep.net, prep.stream.task(2).train, prep.stream.task(2).val, prep.modes, opts, 8);
    for (std::size_t i = 0; i < 2; ++i) {
        // every epoch's checkpoint, not just the selected one, stays put
        for (const auto& c : prep.modes.modes[i].checkpoints)
            CHECK(max_abs_diff(c.params, anchors[i]) < 1e-6);
    }
    const auto after_views = prep.modes.params();
    double after = 0.0;
    for (const auto& e : val)
        after += cross_entropy(joint_inference(prep.net, after_views, e.x, e.allowed), e.label);
    CHECK(std::abs(after - before) / static_cast<double>(val.size()) < 1e-5);
}

TEST_CASE("adaptation sets anchors to the incoming parameters")
{
    auto prep = prepare(ShiftKind::task_il, Activation::relu, 6, 2);
    const auto incoming = prep.modes.modes[1].params;
    update_parameters(prep.net, prep.stream.task(2).train, prep.stream.task(2).val, prep.modes, small_options(2), 6);
    CHECK(prep.modes.modes[1].anchor == incoming);
    CHECK(prep.modes.modes[1].checkpoints.size() == 3);
    CHECK(prep.modes.modes[1].checkpoints[0].params == incoming);
}

TEST_CASE("backtracking returns the best of every combination")
{
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        auto prep = prepare(ShiftKind::task_il, Activation::relu, seed, 2);
        update_parameters(prep.net, prep.stream.task(2).train, prep.stream.task(2).val, prep.modes, small_options(3),
                          seed);
        const auto val = examples_of(prep.stream.task(2).val, true);
        for (double w : {0.0, 0.1, 50.0}) {
            const auto sel = backtrack_select(prep.net, prep.modes, val, w);
            CHECK(sel.exhaustive);
            int combos = 0;
            for (int a = 0; a <= 3; ++a)
                for (int b = 0; b <= 3; ++b) {
                    const std::vector<int> e{a, b};
                    const double j = selection_objective(prep.net, prep.modes, val, e, w);
                    CHECK(sel.objective <= j + 1e-12);
                    ++combos;
                }
            CHECK(combos == 16);
            CHECK(std::abs(sel.objective - selection_objective(prep.net, prep.modes, val, sel.epochs, w)) < 1e-9);
            for (int e : sel.epochs) {
                CHECK(e >= 0);
                CHECK(e <= 3);
            }
        }
    }
}

TEST_CASE("backtracking of one mode over two checkpoints")
{
    StreamSpec ss;
    ss.tasks = 2;
    ss.samples_per_class = 40;
    ss.input_dim = 6;
    const auto stream = make_stream(ss);
    Mlp net(NetworkSpec{6, {5}, stream.global_classes, Activation::relu});
    auto modes = ModeSet::replicate(init_params(net.spec(), 2), 1, 0.0, 10.0);
    initialize_task1(net, stream.task(1).train, modes, small_options(2), 2);
    modes.modes[0].fisher = estimate_fisher(net, modes.modes[0].params, examples_of(stream.task(1).train, true), 0);
    const auto sel = update_parameters(net, stream.task(2).train, stream.task(2).val, modes, small_options(1), 2);
    const auto val = examples_of(stream.task(2).val, true);
    const std::vector<int> e0{0}, e1{1};
    const double j0 = selection_objective(net, modes, val, e0, 0.1);
    const double j1 = selection_objective(net, modes, val, e1, 0.1);
    CHECK(sel.epochs[0] == (j1 < j0 ? 1 : 0));
    CHECK(sel.objective == std::min(j0, j1));
}

TEST_CASE("greedy fallback above the enumeration cap")
{
    auto prep = prepare(ShiftKind::task_il, Activation::relu, 4, 2);
    update_parameters(prep.net, prep.stream.task(2).train, prep.stream.task(2).val, prep.modes, small_options(3), 4);
    const auto val = examples_of(prep.stream.task(2).val, true);
    const auto sel = backtrack_select(prep.net, prep.modes, val, 0.1, 4);
    CHECK_FALSE(sel.exhaustive);
    CHECK(sel.epochs.size() == 2);
    CHECK(std::abs(sel.objective - selection_objective(prep.net, prep.modes, val, sel.epochs, 0.1)) < 1e-9);
}
