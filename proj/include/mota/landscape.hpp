#pragma once

#include "mota/network.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mota {

struct TrajectoryPoint {
    int task = 1;
    int epoch = 0;
    int mode = 0;
    std::vector<double> params;
};

/// Flat parameter vectors in capture order, all of one dimension.
class TrajectoryStore {
public:
    explicit TrajectoryStore(std::string strategy = {}) : strategy_(std::move(strategy)) {}

    void add(int task, int epoch, int mode, const ParamSet& params);
    void add(int task, int epoch, int mode, std::vector<double> flat);

    const std::string& strategy() const { return strategy_; }
    const std::vector<TrajectoryPoint>& points() const { return points_; }
    std::size_t size() const { return points_.size(); }
    std::size_t dimension() const { return points_.empty() ? 0 : points_.front().params.size(); }
    /// Points of one mode, in capture order.
    TrajectoryStore mode(int m) const;
    std::vector<std::vector<double>> vectors() const;

private:
    std::string strategy_;
    std::vector<TrajectoryPoint> points_;
};

struct PrincipalComponent {
    std::vector<double> direction;
    double variance = 0.0;
    /// Share of the total variance along this direction.
    double explained = 0.0;
};

/// Leading principal component of mean-centred snapshots by power iteration.
PrincipalComponent leading_component(const std::vector<std::vector<double>>& snapshots);

struct PcaBasis {
    std::vector<double> mean;
    PrincipalComponent delta;
    PrincipalComponent eta;
};

/// Top two principal directions (power iteration with deflation, tolerance
/// 1e-10); each direction's largest-magnitude entry is positive. Throws
/// DegenerateTrajectoryError below 3 snapshots or rank 2.
PcaBasis pca_top2(const std::vector<std::vector<double>>& snapshots);
PcaBasis pca_top2(const TrajectoryStore& store);

/// Coordinates of (point - origin) along delta and eta.
std::pair<double, double> project(std::span<const double> point, std::span<const double> origin,
                                  std::span<const double> delta, std::span<const double> eta);

/// 1.5 times the largest absolute projected coordinate (1 when all are zero).
double default_half_range(const std::vector<std::pair<double, double>>& projected);

struct LossGrid {
    std::vector<double> delta;
    std::vector<double> eta;
    double half_range = 1.0;
    int steps = 0;
    /// Coefficients shared by both axes.
    std::vector<double> coefficients;
    /// values[i * steps + j]: loss at delta coefficient i, eta coefficient j;
    /// +inf marks a non-finite loss.
    std::vector<double> values;
    double norm_min = 0.0;
    double norm_max = 0.0;
    bool normalized = false;

    double at(int i, int j) const { return values[static_cast<std::size_t>(i * steps + j)]; }
    /// (i, j) of the smallest value; ties go to the first in row-major order.
    std::pair<int, int> argmin() const;
};

/// Coefficient k of `steps` points spanning [-h, h]; the middle one is 0.
std::vector<double> grid_coefficients(double half_range, int steps);

/// Mean cross-entropy of `data` at center + a*delta + b*eta over the grid.
LossGrid loss_grid(const Mlp& net, const ParamSet& center, std::span<const double> delta,
                   std::span<const double> eta, std::span<const Example> data, double half_range, int steps);

/// Joint affine map of all grids onto [0, 1]; +inf maps to 1. Equal values
/// give all-zero grids and a warning.
std::vector<LossGrid> normalize_grids(std::vector<LossGrid> grids);

/// True when the minimum of the grid is not at its center.
bool basin_shifted(const LossGrid& grid);

/// Fraction of consecutive grid pairs whose argmin locations differ.
double basin_shift_fraction(const std::vector<LossGrid>& grids);

void write_grid_csv(const std::filesystem::path& path, const LossGrid& grid);
/// task, epoch, proj_delta, proj_eta (and mode when `with_mode`).
void write_trajectory_csv(const std::filesystem::path& path, const TrajectoryStore& store,
                          std::span<const double> origin, const PcaBasis& basis, bool with_mode);
/// delta and eta in the parameter file format of the given architecture.
void write_directions(const std::filesystem::path& path, const PcaBasis& basis, const std::vector<LayerShape>& shapes);

} // namespace mota
