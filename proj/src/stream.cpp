#include "mota/stream.hpp"

#include "mota/errors.hpp"
#include "mota/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

namespace mota {

std::string to_string(ShiftKind k)
{
    switch (k) {
    case ShiftKind::task_il:
        return "task_il";
    case ShiftKind::instance_il:
        return "instance_il";
    case ShiftKind::domain_il:
        return "domain_il";
    }
    return "?";
}

ShiftKind shift_kind_from_string(const std::string& s)
{
    if (s == "task_il")
        return ShiftKind::task_il;
    if (s == "instance_il")
        return ShiftKind::instance_il;
    if (s == "domain_il")
        return ShiftKind::domain_il;
    throw ConfigError(fmt::format("stream.kind: unknown shift kind '{}'", s));
}

std::string to_string(Split s)
{
    switch (s) {
    case Split::train:
        return "train";
    case Split::val:
        return "val";
    case Split::test:
        return "test";
    }
    return "?";
}

void StreamSpec::validate() const
{
    if (tasks < 1)
        throw ConfigError("stream.tasks must be >= 1");
    if (classes_per_task < 2)
        throw ConfigError("stream.classes_per_task must be >= 2");
    if (samples_per_class < 30)
        throw ConfigError("stream.samples_per_class must be >= 30");
    if (input_dim < 2)
        throw ConfigError("stream.input_dim must be >= 2");
    if (!(sigma > 0.0))
        throw ConfigError("stream.sigma must be positive");
    if (!(mean_range > 0.0))
        throw ConfigError("stream.mean_range must be positive");
}

const TaskSplits& TaskStream::task(int t) const
{
    if (t < 1 || t > size())
        throw IndexError(fmt::format("task {} outside [1, {}]", t, size()));
    return tasks[static_cast<std::size_t>(t - 1)];
}

std::array<std::size_t, 3> split_sizes(std::size_t n, std::array<double, 3> fractions)
{
    std::array<std::size_t, 3> sizes{};
    std::array<double, 3> rem{};
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < 3; ++k) {
        const double exact = static_cast<double>(n) * fractions[k];
        // guard against 0.7*100 = 69.99999...
        const double fl = std::floor(exact + 1e-9);
        sizes[k] = static_cast<std::size_t>(fl);
        rem[k] = exact - fl;
        assigned += sizes[k];
    }
    std::array<std::size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
    for (std::size_t i = 0; assigned < n; ++i, ++assigned)
        ++sizes[order[i % 3]];
    return sizes;
}

SplitResult split(std::vector<Sample> samples, std::array<double, 3> fractions, std::uint64_t seed)
{
    const double total = fractions[0] + fractions[1] + fractions[2];
    if (std::abs(total - 1.0) > 1e-9 || fractions[0] < 0 || fractions[1] < 0 || fractions[2] < 0)
        throw ConfigError("split fractions must be non-negative and sum to 1");
    if (samples.size() < 10)
        throw ConfigError("split needs at least 10 samples");

    std::map<int, std::vector<Sample>> by_class;
    for (auto& s : samples)
        by_class[s.label].push_back(std::move(s));

    SplitResult out;
    for (auto& [label, group] : by_class) {
        if (group.size() < 3)
            throw ConfigError(fmt::format("class {} has {} samples; split needs >= 3", label, group.size()));
        Rng rng(derive_seed(seed, {seed_tag::split, static_cast<std::uint64_t>(label)}));
        std::shuffle(group.begin(), group.end(), rng);
        const auto sizes = split_sizes(group.size(), fractions);
        auto it = group.begin();
        for (std::size_t k = 0; k < sizes[0]; ++k)
            out.train.push_back(std::move(*it++));
        for (std::size_t k = 0; k < sizes[1]; ++k)
            out.val.push_back(std::move(*it++));
        for (std::size_t k = 0; k < sizes[2]; ++k)
            out.test.push_back(std::move(*it++));
    }
    Rng mix(derive_seed(seed, {seed_tag::split, 0xffffULL}));
    std::shuffle(out.train.begin(), out.train.end(), mix);
    std::shuffle(out.val.begin(), out.val.end(), mix);
    std::shuffle(out.test.begin(), out.test.end(), mix);
    return out;
}

std::vector<std::vector<std::size_t>> batches(const TaskDataset& dataset, int batch_size, std::uint64_t epoch_seed)
{
    return batches(dataset.size(), batch_size, epoch_seed);
}

std::vector<std::vector<std::size_t>> batches(std::size_t count, int batch_size, std::uint64_t epoch_seed)
{
    if (batch_size < 1)
        throw ArgumentError("batch_size must be >= 1");
    if (count == 0)
        throw ArgumentError("batches: empty dataset");
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(epoch_seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> out;
    const auto bs = static_cast<std::size_t>(batch_size);
    for (std::size_t start = 0; start < order.size(); start += bs) {
        const auto end = std::min(order.size(), start + bs);
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
}

std::vector<Example> examples_of(const TaskDataset& dataset, bool masked)
{
    std::vector<Example> out;
    out.reserve(dataset.size());
    for (const auto& s : dataset.samples)
        out.push_back({s.x, s.label, masked ? std::span<const int>(dataset.label_set) : std::span<const int>{}});
    return out;
}

std::vector<Example> examples_of(const std::vector<const TaskDataset*>& datasets, bool masked)
{
    std::vector<Example> out;
    for (const TaskDataset* d : datasets) {
        auto part = examples_of(*d, masked);
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

namespace {

std::vector<double> uniform_vector(Rng& rng, int d, double range)
{
    std::uniform_real_distribution<double> u(-range, range);
    std::vector<double> v(static_cast<std::size_t>(d));
    for (double& x : v)
        x = u(rng);
    return v;
}

std::vector<double> gaussian_around(Rng& rng, const std::vector<double>& mean, double sigma)
{
    std::normal_distribution<double> n(0.0, sigma);
    std::vector<double> v(mean.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = mean[i] + n(rng);
    return v;
}

// Random orthonormal pair (u, v) spanning the rotation plane.
std::pair<std::vector<double>, std::vector<double>> random_plane(Rng& rng, int d)
{
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> u(static_cast<std::size_t>(d)), v(static_cast<std::size_t>(d));
    for (auto& x : u)
        x = n(rng);
    for (auto& x : v)
        x = n(rng);
    auto norm = [](std::vector<double>& a) {
        double s = 0.0;
        for (double x : a)
            s += x * x;
        s = std::sqrt(s);
        for (double& x : a)
            x /= s;
    };
    norm(u);
    double dot = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i)
        dot += u[i] * v[i];
    for (std::size_t i = 0; i < u.size(); ++i)
        v[i] -= dot * u[i];
    norm(v);
    return {u, v};
}

// Rotation by angle in the (u, v) plane, then isotropic scaling.
std::vector<double> rotate_scale(const std::vector<double>& x, const std::vector<double>& u, const std::vector<double>& v,
                                 double angle, double scale)
{
    double xu = 0.0, xv = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        xu += x[i] * u[i];
        xv += x[i] * v[i];
    }
    const double c = std::cos(angle), s = std::sin(angle);
    const double nu = c * xu - s * xv;
    const double nv = s * xu + c * xv;
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        out[i] = scale * (x[i] + (nu - xu) * u[i] + (nv - xv) * v[i]);
    return out;
}

TaskSplits finish_task(std::vector<Sample> samples, int t, std::vector<int> label_set, std::uint64_t seed)
{
    auto parts = split(std::move(samples), {0.7, 0.1, 0.2}, derive_seed(seed, {seed_tag::split, static_cast<std::uint64_t>(t)}));
    TaskSplits ts;
    ts.train = {t, std::move(parts.train), label_set, Split::train};
    ts.val = {t, std::move(parts.val), label_set, Split::val};
    ts.test = {t, std::move(parts.test), std::move(label_set), Split::test};
    return ts;
}

} // namespace

TaskStream make_stream(const StreamSpec& spec)
{
    spec.validate();
    TaskStream stream;
    stream.kind = spec.kind;
    stream.input_dim = spec.input_dim;
    stream.seed = spec.seed;
    const int cpt = spec.classes_per_task;
    stream.global_classes = spec.kind == ShiftKind::task_il ? spec.tasks * cpt : cpt;

    Rng rng(derive_seed(spec.seed, {seed_tag::stream}));
    std::vector<std::vector<double>> centers;
    std::vector<double> plane_u, plane_v;
    if (spec.kind != ShiftKind::task_il) {
        for (int c = 0; c < cpt; ++c)
            centers.push_back(uniform_vector(rng, spec.input_dim, spec.mean_range));
    }
    if (spec.kind == ShiftKind::domain_il)
        std::tie(plane_u, plane_v) = random_plane(rng, spec.input_dim);

    for (int t = 1; t <= spec.tasks; ++t) {
        std::vector<Sample> samples;
        std::vector<int> label_set;
        for (int j = 0; j < cpt; ++j) {
            const int label = spec.kind == ShiftKind::task_il ? (t - 1) * cpt + j : j;
            label_set.push_back(label);
            std::vector<double> mean;
            switch (spec.kind) {
            case ShiftKind::task_il:
                mean = uniform_vector(rng, spec.input_dim, spec.mean_range);
                break;
            case ShiftKind::instance_il:
                // a fresh sub-population of the class for every task
                mean = gaussian_around(rng, centers[static_cast<std::size_t>(j)], 1.0);
                break;
            case ShiftKind::domain_il:
                mean = centers[static_cast<std::size_t>(j)];
                break;
            }
            for (int k = 0; k < spec.samples_per_class; ++k) {
                auto x = gaussian_around(rng, mean, spec.sigma);
                if (spec.kind == ShiftKind::domain_il)
                    x = rotate_scale(x, plane_u, plane_v, t * std::numbers::pi / 7.0, 1.0 + 0.1 * t);
                samples.push_back({std::move(x), label, t});
            }
        }
        stream.tasks.push_back(finish_task(std::move(samples), t, std::move(label_set), spec.seed));
    }
    return stream;
}

TaskStream make_stream(ShiftKind kind, int tasks, int classes_per_task, int samples_per_class, std::uint64_t seed)
{
    StreamSpec spec;
    spec.kind = kind;
    spec.tasks = tasks;
    spec.classes_per_task = classes_per_task;
    spec.samples_per_class = samples_per_class;
    spec.seed = seed;
    return make_stream(spec);
}

namespace {

void write_split_csv(const TaskDataset& d, int input_dim, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw Error(fmt::format("cannot write {}", path.string()));
    for (int i = 0; i < input_dim; ++i)
        out << "x_" << i << ',';
    out << "y,task_index\n";
    for (const auto& s : d.samples) {
        for (double v : s.x)
            out << fmt::format("{:.17g},", v);
        out << s.label << ',' << s.task << '\n';
    }
}

std::vector<Sample> read_split_csv(const std::filesystem::path& path, int input_dim)
{
    std::ifstream in(path);
    if (!in)
        throw Error(fmt::format("cannot read {}", path.string()));
    std::string line;
    std::getline(in, line); // header
    std::vector<Sample> out;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ','))
            cells.push_back(cell);
        if (cells.size() != static_cast<std::size_t>(input_dim) + 2)
            throw ShapeError(fmt::format("{}: row has {} columns", path.string(), cells.size()));
        Sample s;
        for (int i = 0; i < input_dim; ++i)
            s.x.push_back(std::stod(cells[static_cast<std::size_t>(i)]));
        s.label = std::stoi(cells[static_cast<std::size_t>(input_dim)]);
        s.task = std::stoi(cells[static_cast<std::size_t>(input_dim) + 1]);
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace

void export_stream(const TaskStream& stream, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json manifest;
    manifest["kind"] = to_string(stream.kind);
    manifest["tasks"] = stream.size();
    manifest["global_classes"] = stream.global_classes;
    manifest["input_dim"] = stream.input_dim;
    manifest["seed"] = stream.seed;
    nlohmann::ordered_json sets = nlohmann::ordered_json::array();
    for (const auto& t : stream.tasks) {
        sets.push_back(t.train.label_set);
        const auto stem = fmt::format("task_{}_", t.train.task_index);
        write_split_csv(t.train, stream.input_dim, dir / (stem + "train.csv"));
        write_split_csv(t.val, stream.input_dim, dir / (stem + "val.csv"));
        write_split_csv(t.test, stream.input_dim, dir / (stem + "test.csv"));
    }
    manifest["label_sets"] = sets;
    std::ofstream out(dir / "stream.json", std::ios::trunc);
    out << manifest.dump(2) << '\n';
}

TaskStream import_stream(const std::filesystem::path& dir)
{
    std::ifstream in(dir / "stream.json");
    if (!in)
        throw Error(fmt::format("no stream.json in {}", dir.string()));
    const auto manifest = nlohmann::json::parse(in);
    TaskStream stream;
    stream.kind = shift_kind_from_string(manifest.at("kind").get<std::string>());
    stream.global_classes = manifest.at("global_classes").get<int>();
    stream.input_dim = manifest.at("input_dim").get<int>();
    stream.seed = manifest.at("seed").get<std::uint64_t>();
    const int tasks = manifest.at("tasks").get<int>();
    const auto& sets = manifest.at("label_sets");
    for (int t = 1; t <= tasks; ++t) {
        const auto labels = sets.at(static_cast<std::size_t>(t - 1)).get<std::vector<int>>();
        const auto stem = fmt::format("task_{}_", t);
        TaskSplits ts;
        ts.train = {t, read_split_csv(dir / (stem + "train.csv"), stream.input_dim), labels, Split::train};
        ts.val = {t, read_split_csv(dir / (stem + "val.csv"), stream.input_dim), labels, Split::val};
        ts.test = {t, read_split_csv(dir / (stem + "test.csv"), stream.input_dim), labels, Split::test};
        stream.tasks.push_back(std::move(ts));
    }
    return stream;
}

} // namespace mota
