#include "mota/errors.hpp"
#include "mota/metrics.hpp"

#include <doctest.h>

#include <cmath>

using namespace mota;

namespace {

AccuracyMatrix fixture()
{
    AccuracyMatrix a(3);
    a.set(1, 1, 0.9);
    a.set(2, 1, 0.8);
    a.set(2, 2, 0.9);
    a.set(3, 1, 0.7);
    a.set(3, 2, 0.85);
    a.set(3, 3, 0.9);
    a.set(1, 2, 0.5);
    a.set(2, 3, 0.55);
    for (int v = 1; v <= 3; ++v)
        a.set_init(v, 1.0 / 3.0);
    return a;
}

ParamSet vec2(double x, double y)
{
    ParamSet p({LayerShape{2, 0}});
    p.values()[0] = x;
    p.values()[1] = y;
    return p;
}

StrategyRun run_of(std::vector<std::vector<ParamSet>> snaps, std::size_t capacity)
{
    StrategyRun r;
    r.snapshots = std::move(snaps);
    r.capacity = capacity;
    r.accuracy = AccuracyMatrix(r.tasks());
    return r;
}

} // namespace

TEST_CASE("hand-computed three task fixture")
{
    const auto a = fixture();
    CHECK(std::abs(average_accuracy(a, 3) - 0.81666666666666667) < 1e-12);
    CHECK(std::abs(backward_transfer(a, 3) - (-0.125)) < 1e-12);
    CHECK(std::abs(remembering(a, 3) - 0.875) < 1e-12);
    CHECK(std::abs(forgetting(a, 3) - 0.125) < 1e-12);
    CHECK(std::abs(forward_transfer(a, 3) - 0.19166666666666667) < 1e-12);

    const auto m = transfer_metrics(a, Strategy::ewc);
    CHECK(m.avg_acc == average_accuracy(a, 3));
    CHECK(m.forgetting == forgetting(a, 3));
}

TEST_CASE("constant matrix has no transfer effects")
{
    AccuracyMatrix a(4);
    for (int t = 1; t <= 4; ++t)
        for (int v = 1; v <= t; ++v)
            a.set(t, v, 0.6);
    CHECK(backward_transfer(a, 4) == 0.0);
    CHECK(remembering(a, 4) == 1.0);
    CHECK(forgetting(a, 4) == 0.0);
    CHECK(std::abs(average_accuracy(a, 4) - 0.6) < 1e-15);
}

TEST_CASE("multi-task convention row")
{
    const auto m = transfer_metrics(fixture(), Strategy::multi_task);
    CHECK(m.bwt == 0.0);
    CHECK(m.fwt == 0.0);
    CHECK(m.remembering == 1.0);
    CHECK(m.forgetting == 0.0);
    CHECK(std::abs(m.avg_acc - 0.81666666666666667) < 1e-12);
}

TEST_CASE("missing entries raise")
{
    AccuracyMatrix a(2);
    a.set(1, 1, 1.0);
    CHECK_THROWS_AS(average_accuracy(a, 2), IncompleteMatrixError);
    CHECK_THROWS_AS(a.init(1), IncompleteMatrixError);
    CHECK_THROWS_AS(a.set(1, 1, 1.5), ArgumentError);
    CHECK_THROWS_AS(a.set(3, 1, 0.5), IndexError);
}

TEST_CASE("masked argmax")
{
    const std::vector<double> p{0.1, 0.5, 0.4};
    CHECK(masked_argmax(p, {}) == 1);
    const std::vector<int> mask{0, 2};
    CHECK(masked_argmax(p, mask) == 2);
    const std::vector<double> tie{0.5, 0.5};
    CHECK(masked_argmax(tie, {}) == 0);
}

TEST_CASE("accuracy of perfect, single-class and uniform predictors")
{
    Mlp net(NetworkSpec{2, {}, 4, Activation::relu});
    ParamSet p({LayerShape{4, 2}});
    // logits follow the first coordinate's sign into class 0 or 1
    p.weights(0)[0] = 10.0;
    p.weights(0)[2] = -10.0;
    TaskDataset d;
    d.label_set = {0, 1};
    d.samples.push_back({{1.0, 0.0}, 0, 1});
    d.samples.push_back({{-1.0, 0.0}, 1, 1});
    CHECK(evaluate_accuracy(net, p, d, true) == 1.0);

    TaskDataset one = d;
    one.label_set = {1};
    one.samples = {{{1.0, 0.0}, 1, 1}, {{-1.0, 0.0}, 1, 1}};
    CHECK(evaluate_accuracy(net, p, one, true) == 1.0);

    // an all-zero network is uniform; the tie rule then always answers the
    // lowest allowed class, so labels drawn uniformly give 1/k on average
    ParamSet zero({LayerShape{4, 2}});
    TaskDataset many;
    many.label_set = {0, 1, 2, 3};
    Rng rng(5);
    std::uniform_int_distribution<int> y(0, 3);
    for (int k = 0; k < 5000; ++k)
        many.samples.push_back({{0.1, 0.2}, y(rng), 1});
    CHECK(std::abs(evaluate_accuracy(net, zero, many, true) - 0.25) < 0.02);

    TaskDataset empty;
    CHECK_THROWS_AS(evaluate_accuracy(net, p, empty, true), ArgumentError);
}

TEST_CASE("drift of a two-parameter run")
{
    const auto trace = drift_trace({{vec2(0, 0)}, {vec2(1, 1)}});
    CHECK(trace.distances.size() == 1);
    CHECK(average_task_drift(trace) == 1.0);
    CHECK(normalized_drift(average_task_drift(trace), average_task_drift(trace)) == 1.0);

    const auto still = drift_trace({{vec2(2, 3)}, {vec2(2, 3)}, {vec2(2, 3)}});
    CHECK(average_task_drift(still) == 0.0);

    CHECK_THROWS_AS(average_task_drift(drift_trace({{vec2(0, 0)}})), ArgumentError);
}

TEST_CASE("drift sums over modes")
{
    const auto trace = drift_trace({{vec2(0, 0), vec2(0, 0)}, {vec2(1, 1), vec2(2, 0)}});
    CHECK(trace.modes == 2);
    CHECK(average_task_drift(trace) == 3.0);
}

TEST_CASE("trade-off is zero for one mode with an identical trajectory")
{
    std::vector<std::vector<ParamSet>> snaps{{vec2(0, 0)}, {vec2(1, 0)}, {vec2(1, 2)}};
    auto multi = run_of(snaps, 2);
    multi.strategy = Strategy::mota;
    multi.selections = {std::nullopt, CheckpointSelection{{3}, 0.0, true}, CheckpointSelection{{1}, 0.0, true}};
    auto single = run_of(snaps, 2);
    const auto ref = vec2(0.5, 0.5);
    const auto r = tradeoff_report(multi, single, ref, ref);
    CHECK(r.pi == 0.0);
    CHECK_FALSE(r.supported);
    CHECK(r.allocation == std::vector<std::vector<int>>{{1, 2, 3}});
}

TEST_CASE("trade-off counts only the tasks a mode took on")
{
    std::vector<std::vector<ParamSet>> multi_snaps{{vec2(0, 0), vec2(0, 0)},
                                                   {vec2(1, 0), vec2(0, 0)},
                                                   {vec2(1, 0), vec2(0, 3)}};
    auto multi = run_of(multi_snaps, 4);
    multi.selections = {std::nullopt, CheckpointSelection{{2, 0}, 0.0, true}, CheckpointSelection{{0, 1}, 0.0, true}};
    auto single = run_of({{vec2(0, 0)}, {vec2(2, 0)}, {vec2(2, 2)}}, 4);
    const auto zero = vec2(0, 0);
    const auto r = tradeoff_report(multi, single, zero, zero);
    CHECK(r.allocation == std::vector<std::vector<int>>{{1, 2}, {1, 3}});
    // mode 0 at task 2: (1+0)/2; mode 1 at task 3: (0+9)/2
    CHECK(r.multi_mode_total == 5.0);
    // task 2: 4/2; task 3: 8/2
    CHECK(r.single_mode_total == 6.0);
    CHECK(r.pi == -1.0);
    CHECK(r.supported);
}

TEST_CASE("trade-off refuses unmatched capacity")
{
    std::vector<std::vector<ParamSet>> snaps{{vec2(0, 0)}, {vec2(1, 0)}};
    auto multi = run_of(snaps, 200);
    auto single = run_of(snaps, 100);
    const auto ref = vec2(0, 0);
    CHECK_THROWS_AS(tradeoff_report(multi, single, ref, ref), ArgumentError);
    multi.capacity = 109;
    CHECK_NOTHROW(tradeoff_report(multi, single, ref, ref));
}

TEST_CASE("strategy names round-trip")
{
    for (auto s : all_strategies())
        CHECK(strategy_from_string(to_string(s)) == s);
    CHECK_THROWS_AS(strategy_from_string("replay"), ConfigError);
    CHECK(is_multi_mode(Strategy::mota));
    CHECK_FALSE(is_multi_mode(Strategy::ewc));
}
