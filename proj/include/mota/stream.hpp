#pragma once

#include "mota/network.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mota {

enum class ShiftKind { task_il, instance_il, domain_il };
enum class Split { train, val, test };

std::string to_string(ShiftKind k);
ShiftKind shift_kind_from_string(const std::string& s);
std::string to_string(Split s);

struct Sample {
    std::vector<double> x;
    int label = 0;
    int task = 1;

    bool operator==(const Sample&) const = default;
};

/// One split of one task. Task indices are 1-based.
struct TaskDataset {
    int task_index = 1;
    std::vector<Sample> samples;
    std::vector<int> label_set;
    Split split = Split::train;

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
    bool operator==(const TaskDataset&) const = default;
};

struct TaskSplits {
    TaskDataset train;
    TaskDataset val;
    TaskDataset test;

    bool operator==(const TaskSplits&) const = default;
};

struct StreamSpec {
    ShiftKind kind = ShiftKind::task_il;
    int tasks = 5;
    int classes_per_task = 2;
    int samples_per_class = 200;
    int input_dim = 16;
    double sigma = 3.0;
    double mean_range = 3.0;
    std::uint64_t seed = 3407;

    void validate() const;
};

struct TaskStream {
    ShiftKind kind = ShiftKind::task_il;
    int global_classes = 0;
    int input_dim = 0;
    std::uint64_t seed = 0;
    std::vector<TaskSplits> tasks;

    int size() const { return static_cast<int>(tasks.size()); }
    /// 1-based access.
    const TaskSplits& task(int t) const;
    bool operator==(const TaskStream&) const = default;
};

TaskStream make_stream(const StreamSpec& spec);
TaskStream make_stream(ShiftKind kind, int tasks, int classes_per_task, int samples_per_class, std::uint64_t seed);

struct SplitResult {
    std::vector<Sample> train;
    std::vector<Sample> val;
    std::vector<Sample> test;
};

/// Stratified by class; per-class sizes follow the largest-remainder rule.
SplitResult split(std::vector<Sample> samples, std::array<double, 3> fractions, std::uint64_t seed);

/// Largest-remainder allocation of n items to the given fractions; ties go to
/// the earlier part.
std::array<std::size_t, 3> split_sizes(std::size_t n, std::array<double, 3> fractions);

/// Index batches covering the dataset once in a seeded order; the last batch
/// may be short.
std::vector<std::vector<std::size_t>> batches(const TaskDataset& dataset, int batch_size, std::uint64_t epoch_seed);
std::vector<std::vector<std::size_t>> batches(std::size_t count, int batch_size, std::uint64_t epoch_seed);

/// Non-owning views; `masked` restricts each sample's softmax to its task's
/// label set. The dataset must outlive the result.
std::vector<Example> examples_of(const TaskDataset& dataset, bool masked);

/// Concatenated views over several datasets, each sample masked by its own
/// dataset's label set.
std::vector<Example> examples_of(const std::vector<const TaskDataset*>& datasets, bool masked);

// CSV export: task_<t>_<split>.csv with header x_0..x_{d-1},y,task_index plus
// a stream.json manifest holding kind, classes and label sets.
void export_stream(const TaskStream& stream, const std::filesystem::path& dir);
TaskStream import_stream(const std::filesystem::path& dir);

} // namespace mota
