#pragma once

#include "mota/network.hpp"
#include "mota/rng.hpp"
#include "mota/stream.hpp"
#include "mota/training.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace mota {

struct Checkpoint {
    int epoch = 0;
    ParamSet params;
};

/// One parameter mode: current parameters, the previous-task anchor, its
/// Fisher diagonal and the per-epoch checkpoints of the task being learned
/// (checkpoints[0] is the anchor at epoch 0).
struct ModeState {
    int index = 0;
    ParamSet params;
    ParamSet anchor;
    ParamSet fisher;
    std::vector<Checkpoint> checkpoints;
};

struct ModeSet {
    std::vector<ModeState> modes;
    double beta_max = 100.0;
    double beta_min = 1000.0;

    /// N copies of `init` with zero Fisher.
    static ModeSet replicate(const ParamSet& init, int n, double beta_max, double beta_min);

    std::size_t size() const { return modes.size(); }
    std::size_t mode_capacity() const { return modes.empty() ? 0 : modes.front().params.size(); }
    /// N * |theta_mode|.
    std::size_t capacity() const { return size() * mode_capacity(); }
    std::vector<const ParamSet*> params() const;
};

struct CheckpointSelection {
    std::vector<int> epochs;
    double objective = 0.0;
    bool exhaustive = true;
};

struct MotaOptions {
    TrainOptions train;
    double drift_weight = 0.1;
    std::size_t enumeration_cap = 4096;
    /// Samples used per Fisher estimate; 0 means the whole split.
    std::size_t fisher_samples = 0;
    bool masked = true;
};

/// Called with (mode index, epoch, params) after every epoch of every mode.
using ModeObserver = std::function<void(int, int, const ParamSet&)>;

/// Uniform draw from the probability simplex (normalised exponentials).
std::vector<double> sample_simplex_weights(int n, Rng& rng);

/// sum_i alpha_i theta_i.
ParamSet interpolate_modes(const ModeSet& modes, std::span<const double> alpha);
ParamSet interpolate_modes(std::span<const ParamSet* const> modes, std::span<const double> alpha);

/// Mean over layers and unordered mode pairs of the per-layer cosine
/// similarity. Throws NumericError on a zero-norm layer.
double pairwise_cosine(const ModeSet& modes);
double pairwise_cosine(std::span<const ParamSet* const> modes);

/// Gradient w.r.t. modes[i] of sum_{j != i} of the layer-averaged cosine
/// similarity between modes[i] and modes[j]; denominators are floored at 1e-12.
GradSet cosine_similarity_gradient(std::span<const ParamSet* const> modes, std::size_t i);

/// First-task training: every batch draws simplex weights, trains through the
/// interpolated parameter and pushes the modes apart with beta_max times the
/// cosine similarity. Requires dataset.task_index == 1.
void initialize_task1(const Mlp& net, const TaskDataset& train, ModeSet& modes, const MotaOptions& options,
                      std::uint64_t seed, const ModeObserver& observer = {});

/// Empirical Fisher diagonal: mean squared per-sample gradient of the
/// log-likelihood of the true label.
GradSet estimate_fisher(const Mlp& net, const ParamSet& params, std::span<const Example> data, std::size_t sample_cap);

struct PenaltyValue {
    double value = 0.0;
    GradSet grad;
};

/// (lambda/2) sum F (theta - anchor)^2 and its gradient lambda F (theta - anchor).
PenaltyValue ewc_penalty(const ParamSet& params, const ParamSet& anchor, const GradSet& fisher, double lambda);

/// Arithmetic mean of the modes' softmax outputs.
std::vector<double> joint_inference(const Mlp& net, std::span<const ParamSet* const> modes, std::span<const double> x,
                                    std::span<const int> allowed = {});
std::vector<double> joint_inference(const Mlp& net, const ModeSet& modes, std::span<const double> x,
                                    std::span<const int> allowed = {});

/// Later-task adaptation: epochs of sequential per-mode passes on the joint
/// loss with each mode's EWC pull (beta_min), one checkpoint per epoch, then
/// backtracking over the checkpoints on the validation split. Anchors are set
/// to the incoming parameters. Throws StateError for task 1.
CheckpointSelection update_parameters(const Mlp& net, const TaskDataset& train, const TaskDataset& val, ModeSet& modes,
                                      const MotaOptions& options, std::uint64_t seed, const ModeObserver& observer = {});

/// Exhaustive search over per-mode checkpoint combinations for the smallest
/// joint cross-entropy on `val` plus drift_weight * sum_i ewc_penalty(., 1).
/// Falls back to per-mode greedy choice when the combination count exceeds
/// `enumeration_cap`.
CheckpointSelection backtrack_select(const Mlp& net, const ModeSet& modes, std::span<const Example> val,
                                     double drift_weight, std::size_t enumeration_cap = 4096);

/// The backtracking criterion for one explicit epoch tuple.
double selection_objective(const Mlp& net, const ModeSet& modes, std::span<const Example> val,
                           std::span<const int> epochs, double drift_weight);

/// Replaces each mode's params with its selected checkpoint.
void apply_selection(ModeSet& modes, const CheckpointSelection& selection);

} // namespace mota
