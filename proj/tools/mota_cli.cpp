#include "mota/config.hpp"
#include "mota/errors.hpp"
#include "mota/runner.hpp"
#include "mota/stream.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitInvariant = 3;

int report_error(const std::exception& e, int code)
{
    std::cerr << "error: " << e.what() << '\n';
    return code;
}

fs::path resolve_run(const std::string& id, const fs::path& root)
{
    const fs::path direct(id);
    if (fs::is_directory(direct) && fs::exists(direct / "run.json"))
        return direct;
    const fs::path under = root / id;
    if (fs::is_directory(under))
        return under;
    throw mota::ConfigError(fmt::format("run '{}' not found under {}", id, root.string()));
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Continual-learning lab: multi-mode adaptation, baselines, metrics and loss landscapes"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    bool force = false;
    int jobs = 1;
    bool quiet = false;

    auto* run = app.add_subcommand("run", "Run every strategy and seed of a config");
    run->add_option("config", config_path, "Config file")->required();
    run->add_option("--seed", seed, "Run this single seed instead of the configured list");
    run->add_option("--out", out_dir, "Output root (overrides experiment.out_dir)");
    run->add_flag("--force", force, "Recompute cells that already have reports");
    run->add_option("--jobs", jobs, "Seeds run in parallel")->check(CLI::PositiveNumber);
    run->add_flag("--quiet", quiet, "No progress lines");

    std::vector<std::string> run_ids;
    std::string compare_out;
    std::string root = "runs";
    auto* compare = app.add_subcommand("compare", "Merge metrics.csv of several runs");
    compare->add_option("run_ids", run_ids, "Run ids or run directories")->required();
    compare->add_option("--out", root, "Root holding the run directories");
    compare->add_option("--output", compare_out, "Write the merged CSV here instead of stdout");

    std::string landscape_run;
    std::string landscape_strategy;
    auto* landscape = app.add_subcommand("landscape", "Export loss landscapes of one strategy of a run");
    landscape->add_option("run_id", landscape_run, "Run id or run directory")->required();
    landscape->add_option("--strategy", landscape_strategy, "Strategy name")->required();
    landscape->add_option("--out", root, "Root holding the run directories");

    std::string validate_path;
    auto* validate = app.add_subcommand("validate-config", "Check a config file");
    validate->add_option("config", validate_path, "Config file")->required();

    mota::StreamSpec stream_spec;
    std::string kind = "task_il";
    std::string stream_out = "stream";
    auto* gen = app.add_subcommand("gen-stream", "Write a frozen synthetic stream as CSV files");
    gen->add_option("--kind", kind, "task_il, instance_il or domain_il");
    gen->add_option("--tasks", stream_spec.tasks, "Number of tasks");
    gen->add_option("--classes-per-task", stream_spec.classes_per_task, "Classes per task");
    gen->add_option("--samples-per-class", stream_spec.samples_per_class, "Samples per class and task");
    gen->add_option("--input-dim", stream_spec.input_dim, "Input dimension");
    gen->add_option("--seed", stream_spec.seed, "Stream seed");
    gen->add_option("--out", stream_out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*run) {
            const auto cfg = mota::load_config(config_path);
            mota::RunOptions options;
            options.force = force;
            options.jobs = jobs;
            options.seed = seed;
            options.verbose = !quiet;
            if (!out_dir.empty())
                options.out_dir = out_dir;
            const auto report = mota::run_experiment(cfg, options);
            for (const auto& s : report.seeds)
                std::cout << s.run_id << '\n';
            std::cerr << fmt::format("experiment {} finished in {:.1f} s; summary in {}\n",
                                     report.config_hash.substr(0, 12), report.seconds,
                                     (report.out_dir / ("experiment_" + report.config_hash.substr(0, 12))).string());
            return report.any_failed() ? kExitRuntime : 0;
        }
        if (*compare) {
            std::vector<fs::path> dirs;
            for (const auto& id : run_ids)
                dirs.push_back(resolve_run(id, root));
            const auto merged = mota::compare_runs(dirs);
            if (compare_out.empty()) {
                std::cout << merged.csv << '\n' << merged.capacity;
            } else {
                std::ofstream(compare_out) << merged.csv;
                std::cout << merged.capacity;
            }
            return 0;
        }
        if (*landscape) {
            const auto strategy = mota::strategy_from_string(landscape_strategy);
            const auto dir = resolve_run(landscape_run, root);
            const auto summary = mota::landscape_for_run(dir, strategy);
            for (std::size_t i = 0; i < summary.basin_shift.size(); ++i)
                std::cout << fmt::format("mode {} basin shift fraction {:.3f}\n", i, summary.basin_shift[i]);
            std::cout << (dir / "landscape" / landscape_strategy).string() << '\n';
            return 0;
        }
        if (*validate) {
            const auto cfg = mota::load_config(validate_path);
            std::cout << fmt::format("ok {}\n", cfg.hash().substr(0, 12));
            return 0;
        }
        if (*gen) {
            try {
                stream_spec.kind = mota::shift_kind_from_string(kind);
            } catch (const mota::Error&) {
                throw mota::ConfigError(fmt::format("--kind: unknown shift kind '{}'", kind));
            }
            const auto stream = mota::make_stream(stream_spec);
            mota::export_stream(stream, stream_out);
            std::cout << stream_out << '\n';
            return 0;
        }
    } catch (const mota::ConfigError& e) {
        return report_error(e, kExitConfig);
    } catch (const mota::InvariantError& e) {
        return report_error(e, kExitInvariant);
    } catch (const std::exception& e) {
        return report_error(e, kExitRuntime);
    }
    return 0;
}
