#include "mota/landscape.hpp"

#include "mota/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <random>

#include <fmt/format.h>
#include <fmt/os.h>

namespace mota {

void TrajectoryStore::add(int task, int epoch, int mode, const ParamSet& params)
{
    add(task, epoch, mode, flatten(params));
}

void TrajectoryStore::add(int task, int epoch, int mode, std::vector<double> flat)
{
    if (!points_.empty() && flat.size() != dimension())
        throw ShapeError(fmt::format("trajectory point of dimension {} added to a store of dimension {}", flat.size(),
                                     dimension()));
    points_.push_back({task, epoch, mode, std::move(flat)});
}

TrajectoryStore TrajectoryStore::mode(int m) const
{
    TrajectoryStore out(strategy_);
    for (const auto& p : points_)
        if (p.mode == m)
            out.points_.push_back(p);
    return out;
}

std::vector<std::vector<double>> TrajectoryStore::vectors() const
{
    std::vector<std::vector<double>> out;
    out.reserve(points_.size());
    for (const auto& p : points_)
        out.push_back(p.params);
    return out;
}

namespace {

constexpr double kPowerTolerance = 1e-10;
constexpr int kPowerMaxIterations = 200000;

double dot(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

void normalize(std::vector<double>& v)
{
    const double n = std::sqrt(dot(v, v));
    for (double& x : v)
        x /= n;
}

void fix_sign(std::vector<double>& v)
{
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (std::abs(v[i]) > std::abs(v[best]))
            best = i;
    if (v[best] < 0.0)
        for (double& x : v)
            x = -x;
}

struct Centered {
    std::vector<double> mean;
    std::vector<std::vector<double>> rows;
    /// Gram matrix of the centred rows, row-major.
    std::vector<double> gram;
    double total = 0.0;
};

Centered center_snapshots(const std::vector<std::vector<double>>& snapshots)
{
    if (snapshots.size() < 3)
        throw DegenerateTrajectoryError(fmt::format("PCA needs at least 3 snapshots, got {}", snapshots.size()));
    const std::size_t d = snapshots.front().size();
    Centered c;
    c.mean.assign(d, 0.0);
    for (const auto& s : snapshots) {
        if (s.size() != d)
            throw ShapeError("snapshots differ in dimension");
        for (std::size_t k = 0; k < d; ++k)
            c.mean[k] += s[k];
    }
    for (double& m : c.mean)
        m /= static_cast<double>(snapshots.size());
    for (const auto& s : snapshots) {
        std::vector<double> r(d);
        for (std::size_t k = 0; k < d; ++k)
            r[k] = s[k] - c.mean[k];
        c.rows.push_back(std::move(r));
    }
    const std::size_t n = c.rows.size();
    c.gram.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j)
            c.gram[i * n + j] = c.gram[j * n + i] = dot(c.rows[i], c.rows[j]);
    for (std::size_t i = 0; i < n; ++i)
        c.total += c.gram[i * n + i];
    return c;
}

/// Dominant eigenpair of a symmetric PSD matrix by power iteration.
std::pair<double, std::vector<double>> power_iteration(const std::vector<double>& m, std::size_t n)
{
    std::mt19937_64 rng(0);
    std::normal_distribution<double> normal;
    std::vector<double> u(n), next(n);
    for (double& x : u)
        x = normal(rng);
    normalize(u);
    double lambda = 0.0;
    for (int it = 0; it < kPowerMaxIterations; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                s += m[i * n + j] * u[j];
            next[i] = s;
        }
        lambda = std::sqrt(dot(next, next));
        if (lambda == 0.0)
            return {0.0, u};
        double change = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            next[i] /= lambda;
            change += (next[i] - u[i]) * (next[i] - u[i]);
        }
        u.swap(next);
        if (std::sqrt(change) < kPowerTolerance)
            break;
    }
    return {lambda, u};
}

/// Parameter-space direction X^T u, normalised.
std::vector<double> lift(const Centered& c, const std::vector<double>& u)
{
    std::vector<double> v(c.mean.size(), 0.0);
    for (std::size_t i = 0; i < c.rows.size(); ++i)
        for (std::size_t k = 0; k < v.size(); ++k)
            v[k] += u[i] * c.rows[i][k];
    normalize(v);
    return v;
}

PrincipalComponent component(const Centered& c, double lambda, const std::vector<double>& u)
{
    PrincipalComponent pc;
    pc.direction = lift(c, u);
    fix_sign(pc.direction);
    pc.variance = lambda / static_cast<double>(c.rows.size());
    pc.explained = lambda / c.total;
    return pc;
}

} // namespace

PrincipalComponent leading_component(const std::vector<std::vector<double>>& snapshots)
{
    const auto c = center_snapshots(snapshots);
    if (!(c.total > 0.0))
        throw DegenerateTrajectoryError("all snapshots coincide");
    const auto [lambda, u] = power_iteration(c.gram, c.rows.size());
    return component(c, lambda, u);
}

PcaBasis pca_top2(const std::vector<std::vector<double>>& snapshots)
{
    const auto c = center_snapshots(snapshots);
    if (!(c.total > 0.0))
        throw DegenerateTrajectoryError("all snapshots coincide");
    const std::size_t n = c.rows.size();
    const auto [l1, u1] = power_iteration(c.gram, n);
    auto deflated = c.gram;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            deflated[i * n + j] -= l1 * u1[i] * u1[j];
    const auto [l2, u2] = power_iteration(deflated, n);
    if (!(l2 > 1e-12 * c.total))
        throw DegenerateTrajectoryError("trajectory has rank < 2");

    PcaBasis basis;
    basis.mean = c.mean;
    basis.delta = component(c, l1, u1);
    basis.eta = component(c, l2, u2);
    // remove the residual overlap left by finite convergence
    auto& eta = basis.eta.direction;
    const double overlap = dot(eta, basis.delta.direction);
    for (std::size_t k = 0; k < eta.size(); ++k)
        eta[k] -= overlap * basis.delta.direction[k];
    normalize(eta);
    fix_sign(eta);
    return basis;
}

PcaBasis pca_top2(const TrajectoryStore& store)
{
    return pca_top2(store.vectors());
}

std::pair<double, double> project(std::span<const double> point, std::span<const double> origin,
                                  std::span<const double> delta, std::span<const double> eta)
{
    if (point.size() != origin.size() || point.size() != delta.size() || point.size() != eta.size())
        throw ShapeError("project: dimension mismatch");
    double a = 0.0;
    double b = 0.0;
    for (std::size_t k = 0; k < point.size(); ++k) {
        const double d = point[k] - origin[k];
        a += d * delta[k];
        b += d * eta[k];
    }
    return {a, b};
}

double default_half_range(const std::vector<std::pair<double, double>>& projected)
{
    double m = 0.0;
    for (const auto& [a, b] : projected)
        m = std::max({m, std::abs(a), std::abs(b)});
    return m > 0.0 ? 1.5 * m : 1.0;
}

std::pair<int, int> LossGrid::argmin() const
{
    std::size_t best = 0;
    for (std::size_t k = 1; k < values.size(); ++k)
        if (values[k] < values[best])
            best = k;
    return {static_cast<int>(best) / steps, static_cast<int>(best) % steps};
}

std::vector<double> grid_coefficients(double half_range, int steps)
{
    if (!(half_range > 0.0))
        throw ArgumentError("grid half range must be positive");
    if (steps < 1 || steps % 2 == 0)
        throw ArgumentError(fmt::format("grid steps must be odd and positive, got {}", steps));
    if (steps == 1)
        return {0.0};
    std::vector<double> c(static_cast<std::size_t>(steps));
    for (int k = 0; k < steps; ++k)
        c[static_cast<std::size_t>(k)] = half_range * static_cast<double>(2 * k - (steps - 1)) / (steps - 1);
    return c;
}

LossGrid loss_grid(const Mlp& net, const ParamSet& center, std::span<const double> delta,
                   std::span<const double> eta, std::span<const Example> data, double half_range, int steps)
{
    if (delta.size() != center.size() || eta.size() != center.size())
        throw ShapeError("loss_grid: direction dimension differs from the parameters");
    if (data.empty())
        throw ArgumentError("loss_grid: empty dataset");
    LossGrid g;
    g.delta.assign(delta.begin(), delta.end());
    g.eta.assign(eta.begin(), eta.end());
    g.half_range = half_range;
    g.steps = steps;
    g.coefficients = grid_coefficients(half_range, steps);
    g.values.resize(static_cast<std::size_t>(steps) * static_cast<std::size_t>(steps));

    ParamSet point = center;
    const auto c = center.values();
    auto p = point.values();
    for (int i = 0; i < steps; ++i) {
        const double a = g.coefficients[static_cast<std::size_t>(i)];
        for (int j = 0; j < steps; ++j) {
            const double b = g.coefficients[static_cast<std::size_t>(j)];
            for (std::size_t k = 0; k < p.size(); ++k)
                p[k] = c[k] + a * delta[k] + b * eta[k];
            double loss = std::numeric_limits<double>::infinity();
            try {
                loss = net.mean_loss(point, data);
            } catch (const NumericError&) {
            }
            if (!std::isfinite(loss))
                loss = std::numeric_limits<double>::infinity();
            g.values[static_cast<std::size_t>(i * steps + j)] = loss;
        }
    }
    return g;
}

std::vector<LossGrid> normalize_grids(std::vector<LossGrid> grids)
{
    if (grids.empty())
        throw ArgumentError("normalize_grids: no grids");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& g : grids)
        for (double v : g.values)
            if (std::isfinite(v)) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
    const bool flat = !(lo < hi);
    if (flat)
        std::clog << "warning: loss grids have no spread; normalised values set to 0\n";
    for (auto& g : grids) {
        for (double& v : g.values) {
            if (flat)
                v = 0.0;
            else if (!std::isfinite(v))
                v = 1.0;
            else
                v = (v - lo) / (hi - lo);
        }
        g.norm_min = flat ? 0.0 : lo;
        g.norm_max = flat ? 0.0 : hi;
        g.normalized = true;
    }
    return grids;
}

bool basin_shifted(const LossGrid& grid)
{
    const int mid = grid.steps / 2;
    return grid.argmin() != std::pair<int, int>{mid, mid};
}

double basin_shift_fraction(const std::vector<LossGrid>& grids)
{
    if (grids.size() < 2)
        throw ArgumentError("basin_shift_fraction needs at least two grids");
    int shifted = 0;
    for (std::size_t t = 1; t < grids.size(); ++t)
        if (grids[t].argmin() != grids[t - 1].argmin())
            ++shifted;
    return static_cast<double>(shifted) / static_cast<double>(grids.size() - 1);
}

void write_grid_csv(const std::filesystem::path& path, const LossGrid& grid)
{
    auto out = fmt::output_file(path.string());
    out.print("alpha_delta,alpha_eta,loss_norm\n");
    for (int i = 0; i < grid.steps; ++i)
        for (int j = 0; j < grid.steps; ++j)
            out.print("{:.17g},{:.17g},{:.17g}\n", grid.coefficients[static_cast<std::size_t>(i)],
                      grid.coefficients[static_cast<std::size_t>(j)], grid.at(i, j));
}

void write_trajectory_csv(const std::filesystem::path& path, const TrajectoryStore& store,
                          std::span<const double> origin, const PcaBasis& basis, bool with_mode)
{
    auto out = fmt::output_file(path.string());
    out.print("task,epoch,proj_delta,proj_eta{}\n", with_mode ? ",mode" : "");
    for (const auto& p : store.points()) {
        const auto [a, b] = project(p.params, origin, basis.delta.direction, basis.eta.direction);
        if (with_mode)
            out.print("{},{},{:.17g},{:.17g},{}\n", p.task, p.epoch, a, b, p.mode);
        else
            out.print("{},{},{:.17g},{:.17g}\n", p.task, p.epoch, a, b);
    }
}

void write_directions(const std::filesystem::path& path, const PcaBasis& basis, const std::vector<LayerShape>& shapes)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(fmt::format("cannot write {}", path.string()));
    write_params(out, unflatten(basis.delta.direction, shapes));
    write_params(out, unflatten(basis.eta.direction, shapes));
}

} // namespace mota
