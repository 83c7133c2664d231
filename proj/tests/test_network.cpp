#include "mota/errors.hpp"
#include "mota/network.hpp"
#include "mota/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace mota;

namespace {

ParamSet identity_layer()
{
    ParamSet p({LayerShape{2, 2}});
    auto w = p.weights(0);
    w[0] = 1.0;
    w[3] = 1.0;
    return p;
}

struct OwnedBatch {
    std::vector<std::vector<double>> xs;
    std::vector<int> labels;
    std::vector<Example> examples;
};

OwnedBatch random_batch(Rng& rng, int n, int dim, int classes)
{
    OwnedBatch b;
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_int_distribution<int> y(0, classes - 1);
    for (int i = 0; i < n; ++i) {
        std::vector<double> x(static_cast<std::size_t>(dim));
        for (double& v : x)
            v = g(rng);
        b.xs.push_back(std::move(x));
        b.labels.push_back(y(rng));
    }
    for (int i = 0; i < n; ++i)
        b.examples.push_back({b.xs[static_cast<std::size_t>(i)], b.labels[static_cast<std::size_t>(i)], {}});
    return b;
}

} // namespace

TEST_CASE("forward of an all-zero network is uniform")
{
    Mlp net(NetworkSpec{3, {5}, 4, Activation::relu});
    ParamSet p(net.spec().layer_shapes());
    const std::vector<double> x{0.3, -1.0, 2.0};
    for (double q : net.forward(p, x))
        CHECK(q == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("forward of a single identity layer")
{
    Mlp net(NetworkSpec{2, {}, 2, Activation::relu});
    const auto p = identity_layer();
    const std::vector<double> zero{0.0, 0.0};
    const auto a = net.forward(p, zero);
    CHECK(a[0] == 0.5);
    CHECK(a[1] == 0.5);

    const std::vector<double> e1{1.0, 0.0};
    const auto b = net.forward(p, e1);
    const double e = std::exp(1.0);
    CHECK(std::abs(b[0] - e / (e + 1.0)) < 1e-15);
    CHECK(std::abs(b[1] - 1.0 / (e + 1.0)) < 1e-15);
    CHECK(b[0] == doctest::Approx(0.7311).epsilon(1e-4));
}

TEST_CASE("forward rejects a wrong input size")
{
    Mlp net(NetworkSpec{2, {}, 2, Activation::relu});
    const std::vector<double> x{1.0, 2.0, 3.0};
    CHECK_THROWS_AS(net.forward(identity_layer(), x), ShapeError);
}

TEST_CASE("cross entropy values")
{
    const std::vector<double> sure{1.0, 0.0};
    CHECK(cross_entropy(sure, 0) == 0.0);
    const std::vector<double> half{0.5, 0.5};
    CHECK(std::abs(cross_entropy(half, 1) - std::log(2.0)) < 1e-15);
    const std::vector<double> uniform(10, 0.1);
    CHECK(std::abs(cross_entropy(uniform, 7) - std::log(10.0)) < 1e-12);
    CHECK(cross_entropy(sure, 1) == doctest::Approx(-std::log(kProbFloor)));
    CHECK_THROWS_AS(cross_entropy(half, 2), IndexError);
}

TEST_CASE("analytic gradients match central differences")
{
    Rng rng(11);
    for (auto act : {Activation::relu, Activation::tanh}) {
        Mlp net(NetworkSpec{4, {6, 5}, 3, act});
        for (int rep = 0; rep < 5; ++rep) {
            auto p = init_params(net.spec(), 100 + static_cast<std::uint64_t>(rep));
            auto b = random_batch(rng, 7, 4, 3);
            const auto lg = net.backward(p, b.examples);
            CHECK(lg.loss == doctest::Approx(net.mean_loss(p, b.examples)).epsilon(1e-14));
            auto v = p.values();
            const auto g = lg.grads.values();
            for (std::size_t k = 0; k < v.size(); ++k) {
                const double keep = v[k];
                const double h = 1e-5;
                v[k] = keep + h;
                const double up = net.mean_loss(p, b.examples);
                v[k] = keep - h;
                const double down = net.mean_loss(p, b.examples);
                v[k] = keep;
                const double fd = (up - down) / (2.0 * h);
                CHECK(std::abs(fd - g[k]) <= 1e-4 * std::max(1.0, std::abs(fd)));
            }
        }
    }
}

TEST_CASE("duplicated batch gives the same loss and gradient")
{
    Rng rng(5);
    Mlp net(NetworkSpec{4, {6}, 3, Activation::tanh});
    const auto p = init_params(net.spec(), 9);
    auto b = random_batch(rng, 5, 4, 3);
    auto twice = b.examples;
    twice.insert(twice.end(), b.examples.begin(), b.examples.end());
    const auto one = net.backward(p, b.examples);
    const auto two = net.backward(p, twice);
    CHECK(std::abs(one.loss - two.loss) < 1e-12);
    for (std::size_t k = 0; k < one.grads.size(); ++k)
        CHECK(std::abs(one.grads.values()[k] - two.grads.values()[k]) < 1e-12);
}

TEST_CASE("gradient vanishes at a saturated minimum")
{
    Mlp net(NetworkSpec{2, {}, 2, Activation::relu});
    ParamSet p({LayerShape{2, 2}});
    p.bias(0)[0] = 60.0;
    const std::vector<double> x{0.0, 0.0};
    const std::vector<Example> batch{{x, 0, {}}};
    const auto lg = net.backward(p, batch);
    for (double g : lg.grads.values())
        CHECK(std::abs(g) < 1e-8);
}

TEST_CASE("backward rejects an empty batch")
{
    Mlp net(NetworkSpec{2, {}, 2, Activation::relu});
    CHECK_THROWS_AS(net.backward(identity_layer(), {}), ArgumentError);
}

TEST_CASE("masked softmax ignores classes outside the mask")
{
    Mlp net(NetworkSpec{3, {4}, 4, Activation::relu});
    const auto p = init_params(net.spec(), 3);
    const std::vector<double> x{1.0, -0.5, 0.2};
    const std::vector<int> allowed{2, 3};
    const auto q = net.forward(p, x, allowed);
    CHECK(q[0] == 0.0);
    CHECK(q[1] == 0.0);
    CHECK(q[2] + q[3] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("optimizer step arithmetic")
{
    ParamSet p({LayerShape{1, 0}});
    p.values()[0] = 1.0;
    ParamSet g = ParamSet::zeros_like(p);
    CHECK(optimizer_step(p, g, 0.1) == p);
    g.values()[0] = 0.5;
    CHECK(optimizer_step(p, g, 0.1).values()[0] == doctest::Approx(0.95).epsilon(1e-15));
    ParamSet other({LayerShape{2, 0}});
    CHECK_THROWS_AS(optimizer_step(p, other, 0.1), ShapeError);
}

TEST_CASE("axpy, flatten and parameter counting")
{
    NetworkSpec spec{4, {8}, 3, Activation::relu};
    CHECK(dims(spec) == 67u);
    const auto x = init_params(spec, 1);
    const auto y = init_params(spec, 2);
    CHECK(axpy(0.0, x, y) == y);
    CHECK(axpy(1.0, x, ParamSet::zeros_like(x)) == x);
    const auto flat = flatten(x);
    CHECK(flat.size() == 67u);
    CHECK(unflatten(flat, x.shapes()) == x);
    CHECK_THROWS_AS(axpy(1.0, x, init_params(NetworkSpec{4, {7}, 3, Activation::relu}, 1)), ShapeError);
}

TEST_CASE("initialisation is deterministic in the seed")
{
    NetworkSpec spec{5, {6}, 3, Activation::relu};
    CHECK(init_params(spec, 42) == init_params(spec, 42));
    CHECK_FALSE(init_params(spec, 42) == init_params(spec, 43));
}

TEST_CASE("parameter files round-trip bit-exactly")
{
    const auto p = init_params(NetworkSpec{3, {4, 2}, 2, Activation::tanh}, 8);
    std::stringstream buf;
    write_params(buf, p);
    CHECK(read_params(buf) == p);
}

TEST_CASE("dimension-normalised distance")
{
    ParamSet a({LayerShape{1, 1}});
    ParamSet b = ParamSet::zeros_like(a);
    b.values()[0] = 1.0;
    b.values()[1] = 1.0;
    CHECK(mean_squared_distance(a, b) == 1.0);
    CHECK(mean_squared_distance(a, a) == 0.0);
}
