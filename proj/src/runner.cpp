#include "mota/runner.hpp"

#include "mota/errors.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <fmt/os.h>
#include <json.hpp>

namespace mota {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::mutex log_mutex;

template <typename... Args>
void log(bool enabled, fmt::format_string<Args...> f, Args&&... args)
{
    if (!enabled)
        return;
    std::lock_guard lock(log_mutex);
    std::clog << fmt::format(f, std::forward<Args>(args)...) << '\n';
}

double seconds_since(std::chrono::steady_clock::time_point start)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(fmt::format("cannot write {}", path.string()));
    out << text;
}

std::string read_text(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(fmt::format("cannot read {}", path.string()));
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

json read_json(const fs::path& path)
{
    try {
        return json::parse(read_text(path));
    } catch (const json::exception& e) {
        throw Error(fmt::format("{}: {}", path.string(), e.what()));
    }
}

void write_json(const fs::path& path, const json& j)
{
    write_text(path, j.dump(2) + "\n");
}

std::string csv_real(double x)
{
    return fmt::format("{:.17g}", x);
}

json selection_json(const CheckpointSelection& s)
{
    return {{"epochs", s.epochs}, {"objective", s.objective}, {"exhaustive", s.exhaustive}};
}

CheckpointSelection selection_from_json(const json& j)
{
    CheckpointSelection s;
    s.epochs = j.at("epochs").get<std::vector<int>>();
    s.objective = j.at("objective").get<double>();
    s.exhaustive = j.at("exhaustive").get<bool>();
    return s;
}

json metrics_json(const CellReport& c)
{
    json m = {{"avg_acc", c.metrics.avg_acc},         {"bwt", c.metrics.bwt},
              {"fwt", c.metrics.fwt},                 {"remembering", c.metrics.remembering},
              {"forgetting", c.metrics.forgetting},   {"drift_raw", c.drift_raw}};
    m["drift_norm"] = c.drift_norm ? json(*c.drift_norm) : json(nullptr);
    return m;
}

json accuracy_json(const AccuracyMatrix& a)
{
    json rows = json::array();
    for (int t = 1; t <= a.tasks(); ++t) {
        json row = json::array();
        for (int v = 1; v <= a.tasks(); ++v) {
            const auto e = a.get(t, v);
            row.push_back(e ? json(*e) : json(nullptr));
        }
        rows.push_back(row);
    }
    json init = json::array();
    for (int v = 1; v <= a.tasks(); ++v) {
        const auto e = a.get_init(v);
        init.push_back(e ? json(*e) : json(nullptr));
    }
    return {{"rows", rows}, {"init", init}};
}

AccuracyMatrix accuracy_from_json(const json& j)
{
    const auto& rows = j.at("rows");
    AccuracyMatrix a(static_cast<int>(rows.size()));
    for (std::size_t t = 0; t < rows.size(); ++t)
        for (std::size_t v = 0; v < rows[t].size(); ++v)
            if (!rows[t][v].is_null())
                a.set(static_cast<int>(t + 1), static_cast<int>(v + 1), rows[t][v].get<double>());
    const auto& init = j.at("init");
    for (std::size_t v = 0; v < init.size(); ++v)
        if (!init[v].is_null())
            a.set_init(static_cast<int>(v + 1), init[v].get<double>());
    return a;
}

fs::path snapshot_path(const fs::path& dir, int t, int mode)
{
    return dir / "snapshots" / fmt::format("task_{}_mode_{}.params", t, mode);
}

CellReport summarize(const StrategyRun& run)
{
    CellReport c;
    c.strategy = run.strategy;
    c.seed = run.seed;
    c.metrics = transfer_metrics(run.accuracy, run.strategy);
    c.drift_raw = run_drift(run);
    c.capacity = run.capacity;
    c.accuracy = run.accuracy;
    return c;
}

void write_report(const fs::path& dir, const StrategyRun& run, const CellReport& cell, const std::string& hash)
{
    fs::create_directories(dir / "snapshots");
    for (int t = 1; t <= run.tasks(); ++t)
        for (int i = 0; i < run.modes(); ++i)
            save_params(snapshot_path(dir, t, i), run.snapshots[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(i)]);
    json sel = json::array();
    for (const auto& s : run.selections)
        sel.push_back(s ? selection_json(*s) : json(nullptr));
    json j = {{"strategy", to_string(run.strategy)},
              {"seed", run.seed},
              {"config_hash", hash},
              {"tasks", run.tasks()},
              {"modes", run.modes()},
              {"accuracy", accuracy_json(run.accuracy)},
              {"metrics", metrics_json(cell)},
              {"capacity", {{"model_params", run.capacity}, {"replay_buffer", run.replay_buffer}}},
              {"selections", sel}};
    write_json(dir / "report.json", j);
}

bool cell_complete(const fs::path& dir, const std::string& hash)
{
    const auto report = dir / "report.json";
    if (!fs::exists(report))
        return false;
    try {
        return read_json(report).value("config_hash", std::string{}) == hash;
    } catch (const Error&) {
        return false;
    }
}

json tradeoff_json(const TradeoffReport& r)
{
    return {{"multi_mode_total", r.multi_mode_total},
            {"single_mode_total", r.single_mode_total},
            {"pi", r.pi},
            {"allocation", r.allocation},
            {"supported", r.supported}};
}

TradeoffReport tradeoff_from_json(const json& j)
{
    TradeoffReport r;
    r.multi_mode_total = j.at("multi_mode_total").get<double>();
    r.single_mode_total = j.at("single_mode_total").get<double>();
    r.pi = j.at("pi").get<double>();
    r.allocation = j.at("allocation").get<std::vector<std::vector<int>>>();
    r.supported = j.at("supported").get<bool>();
    return r;
}

json landscape_json(const LandscapeSummary& s)
{
    return {{"strategy", to_string(s.strategy)}, {"basin_shift", s.basin_shift}};
}

LandscapeSummary landscape_from_json(const json& j)
{
    LandscapeSummary s;
    s.strategy = strategy_from_string(j.at("strategy").get<std::string>());
    s.basin_shift = j.at("basin_shift").get<std::vector<double>>();
    return s;
}

bool wants_landscape(const ExperimentConfig& cfg, Strategy s)
{
    return cfg.landscape.enabled &&
           std::find(cfg.landscape.strategies.begin(), cfg.landscape.strategies.end(), s) != cfg.landscape.strategies.end();
}

struct Captured {
    StrategyRun run;
    TrajectoryStore store;
    Mlp net;
};

Captured capture(Strategy strategy, const TaskStream& stream, const StrategyOptions& options, std::uint64_t seed,
                 const TrajectoryObserver& extra)
{
    TrajectoryStore store(to_string(strategy));
    RunHooks hooks;
    hooks.on_epoch = [&](int t, int mode, int e, const ParamSet& p) {
        store.add(t, e, mode, p);
        if (extra)
            extra(t, mode, e, p);
    };
    auto learner = make_learner(strategy, options, seed, hooks);
    auto run = run_learner(*learner, strategy, stream, options.masked, seed);
    return {std::move(run), std::move(store), learner->network()};
}

void write_run_manifest(const fs::path& dir, const ExperimentConfig& cfg, std::uint64_t seed, const std::string& hash)
{
    fs::create_directories(dir);
    ExperimentConfig snapshot = cfg;
    snapshot.seed = seed;
    snapshot.replicates = 1;
    write_text(dir / "config.ini", snapshot.to_ini());
    write_json(dir / "run.json", {{"config_hash", hash}, {"seed", seed}, {"run_id", make_run_id(hash, seed)}});
}

SeedReport run_seed(const ExperimentConfig& cfg, const RunOptions& ro, const fs::path& root, std::uint64_t seed,
                    const std::string& hash)
{
    SeedReport report;
    report.seed = seed;
    report.run_id = make_run_id(hash, seed);
    const fs::path dir = root / report.run_id;
    write_run_manifest(dir, cfg, seed, hash);

    const auto options = cfg.resolved_options();
    const TaskStream stream = make_stream(cfg.stream_for(seed));
    std::map<Strategy, StrategyRun> runs;
    bool recomputed = false;

    for (Strategy s : cfg.strategies) {
        const auto cell_dir = dir / to_string(s);
        const auto start = std::chrono::steady_clock::now();
        CellReport cell;
        cell.strategy = s;
        cell.seed = seed;
        try {
            const bool landscape = wants_landscape(cfg, s);
            const auto landscape_dir = dir / "landscape" / to_string(s);
            if (!ro.force && cell_complete(cell_dir, hash)) {
                runs[s] = load_strategy_run(cell_dir);
                cell = summarize(runs[s]);
                cell.reused = true;
                if (landscape) {
                    if (fs::exists(landscape_dir / "summary.json"))
                        report.landscapes.push_back(landscape_from_json(read_json(landscape_dir / "summary.json")));
                    else
                        report.landscapes.push_back(landscape_for_run(dir, s));
                }
            } else {
                recomputed = true;
                TrajectoryObserver checkpoints;
                if (s == Strategy::mota && cfg.save_checkpoints)
                    checkpoints = [&dir](int t, int mode, int e, const ParamSet& p) {
                        const auto task_dir = dir / fmt::format("task_{}", t);
                        fs::create_directories(task_dir);
                        save_params(task_dir / fmt::format("mode_{}_epoch_{}.params", mode, e), p);
                    };
                if (landscape) {
                    auto cap = capture(s, stream, options, seed, checkpoints);
                    runs[s] = std::move(cap.run);
                    report.landscapes.push_back(export_landscape(landscape_dir, s, cap.store, runs[s].snapshots.back(),
                                                                 cap.net, stream, cfg.landscape, options.masked));
                } else {
                    RunHooks hooks;
                    hooks.on_epoch = checkpoints;
                    runs[s] = run_strategy(s, stream, options, seed, hooks);
                }
                if (s == Strategy::mota && cfg.save_checkpoints)
                    for (int t = 2; t <= runs[s].tasks(); ++t)
                        if (const auto& sel = runs[s].selections[static_cast<std::size_t>(t - 1)]) {
                            json j = selection_json(*sel);
                            j["drift_weight"] = options.drift_weight;
                            write_json(dir / fmt::format("task_{}", t) / "selection.json", j);
                        }
                cell = summarize(runs[s]);
            }
        } catch (const InvariantError&) {
            throw;
        } catch (const Error& e) {
            cell.failed = true;
            cell.error = e.what();
            runs.erase(s);
        }
        cell.seconds = seconds_since(start);
        log(ro.verbose, "[{}] {:<17} {} in {:.2f} s", report.run_id, to_string(s),
            cell.failed ? "FAILED: " + cell.error : (cell.reused ? std::string("reused") : std::string("done")),
            cell.seconds);
        report.cells.push_back(std::move(cell));
    }

    if (const auto ref = runs.find(cfg.drift_reference); ref != runs.end() && ref->second.tasks() >= 2) {
        const double reference = run_drift(ref->second);
        for (auto& c : report.cells)
            if (!c.failed && reference > 0.0 && runs.count(c.strategy) && runs.at(c.strategy).tasks() >= 2)
                c.drift_norm = normalized_drift(c.drift_raw, reference);
    }
    for (const auto& c : report.cells)
        if (!c.failed)
            write_report(dir / to_string(c.strategy), runs.at(c.strategy), c, hash);

    std::string csv = metrics_csv_header();
    for (const auto& c : report.cells)
        csv += metrics_csv_row(c);
    write_text(dir / "metrics.csv", csv);

    const bool tradeoff_ready = cfg.tradeoff && runs.count(Strategy::mota) && runs.count(cfg.tradeoff_baseline);
    if (tradeoff_ready) {
        const auto path = dir / "tradeoff.json";
        if (!recomputed && fs::exists(path)) {
            report.tradeoff = tradeoff_from_json(read_json(path));
        } else {
            try {
                ParamSet mtl_single;
                if (const auto mtl = runs.find(Strategy::multi_task); mtl != runs.end())
                    mtl_single = mtl->second.snapshots.back().front();
                else
                    mtl_single = train_mtl_reference(stream, options.network, options, seed);
                const auto mtl_multi = train_mtl_reference(stream, options.mode_network, options, seed);
                report.tradeoff =
                    tradeoff_report(runs.at(Strategy::mota), runs.at(cfg.tradeoff_baseline), mtl_multi, mtl_single);
                write_json(path, tradeoff_json(*report.tradeoff));
            } catch (const ArgumentError& e) {
                log(true, "[{}] trade-off report skipped: {}", report.run_id, e.what());
            }
        }
    }
    return report;
}

json aggregate_json(const ExperimentConfig& cfg, const std::vector<SeedReport>& seeds)
{
    json means = json::object();
    for (Strategy s : cfg.strategies) {
        double sums[7] = {};
        int n = 0;
        int n_norm = 0;
        for (const auto& sr : seeds) {
            const auto* c = sr.cell(s);
            if (c == nullptr || c->failed)
                continue;
            ++n;
            sums[0] += c->metrics.avg_acc;
            sums[1] += c->metrics.bwt;
            sums[2] += c->metrics.fwt;
            sums[3] += c->metrics.remembering;
            sums[4] += c->metrics.forgetting;
            sums[5] += c->drift_raw;
            if (c->drift_norm) {
                sums[6] += *c->drift_norm;
                ++n_norm;
            }
        }
        if (n == 0)
            continue;
        means[to_string(s)] = {{"seeds", n},
                               {"avg_acc", sums[0] / n},
                               {"bwt", sums[1] / n},
                               {"fwt", sums[2] / n},
                               {"remembering", sums[3] / n},
                               {"forgetting", sums[4] / n},
                               {"drift_raw", sums[5] / n},
                               {"drift_norm", n_norm ? json(sums[6] / n_norm) : json(nullptr)}};
    }

    // votes[metric]["a>b"]: seeds in which strategy a scored strictly higher than b
    json votes = json::object();
    const std::pair<const char*, std::optional<double> (*)(const CellReport&)> metrics[] = {
        {"avg_acc", [](const CellReport& c) -> std::optional<double> { return c.metrics.avg_acc; }},
        {"forgetting", [](const CellReport& c) -> std::optional<double> { return c.metrics.forgetting; }},
        {"drift_norm", [](const CellReport& c) -> std::optional<double> { return c.drift_norm; }},
    };
    for (const auto& [name, get] : metrics) {
        json table = json::object();
        for (Strategy a : cfg.strategies)
            for (Strategy b : cfg.strategies) {
                if (a == b)
                    continue;
                int wins = 0;
                for (const auto& sr : seeds) {
                    const auto* ca = sr.cell(a);
                    const auto* cb = sr.cell(b);
                    if (!ca || !cb || ca->failed || cb->failed)
                        continue;
                    const auto va = get(*ca);
                    const auto vb = get(*cb);
                    if (va && vb && *va > *vb)
                        ++wins;
                }
                table[fmt::format("{}>{}", to_string(a), to_string(b))] = wins;
            }
        votes[name] = table;
    }
    int pi_negative = 0;
    int pi_total = 0;
    for (const auto& sr : seeds)
        if (sr.tradeoff) {
            ++pi_total;
            pi_negative += sr.tradeoff->pi < 0.0 ? 1 : 0;
        }
    votes["tradeoff_pi_negative"] = {{"seeds", pi_total}, {"negative", pi_negative}};
    return {{"means", means}, {"votes", votes}};
}

json settings_json(const ExperimentConfig& cfg)
{
    const auto o = cfg.resolved_options();
    return {{"architecture", "multilayer perceptron"},
            {"optimizer", "constant learning-rate gradient descent"},
            {"ewc_update", "proximal step on the quadratic pull"},
            {"epochs", o.train.epochs},
            {"batch_size", o.train.batch_size},
            {"lr", o.train.lr},
            {"data", fmt::format("synthetic {} stream, {} tasks", to_string(cfg.stream.kind), cfg.stream.tasks)},
            {"single_model_params", dims(o.network)},
            {"mode_params", dims(o.mode_network)}};
}

} // namespace

const CellReport* SeedReport::cell(Strategy s) const
{
    for (const auto& c : cells)
        if (c.strategy == s)
            return &c;
    return nullptr;
}

bool ExperimentReport::any_failed() const
{
    for (const auto& s : seeds)
        for (const auto& c : s.cells)
            if (c.failed)
                return true;
    return false;
}

std::string make_run_id(const std::string& config_hash, std::uint64_t seed)
{
    return fmt::format("{}_{}", config_hash.substr(0, 12), seed);
}

double run_drift(const StrategyRun& run)
{
    if (run.tasks() < 2)
        return 0.0;
    return average_task_drift(drift_trace(run.snapshots));
}

void save_strategy_run(const fs::path& dir, const StrategyRun& run, const std::string& config_hash)
{
    write_report(dir, run, summarize(run), config_hash);
}

StrategyRun load_strategy_run(const fs::path& dir)
{
    const auto j = read_json(dir / "report.json");
    StrategyRun run;
    try {
        run.strategy = strategy_from_string(j.at("strategy").get<std::string>());
        run.seed = j.at("seed").get<std::uint64_t>();
        run.accuracy = accuracy_from_json(j.at("accuracy"));
        run.capacity = j.at("capacity").at("model_params").get<std::size_t>();
        run.replay_buffer = j.at("capacity").at("replay_buffer").get<std::size_t>();
        const int tasks = j.at("tasks").get<int>();
        const int modes = j.at("modes").get<int>();
        for (int t = 1; t <= tasks; ++t) {
            std::vector<ParamSet> row;
            for (int i = 0; i < modes; ++i)
                row.push_back(load_params(snapshot_path(dir, t, i)));
            run.snapshots.push_back(std::move(row));
        }
        for (const auto& s : j.at("selections"))
            run.selections.push_back(s.is_null() ? std::nullopt : std::optional(selection_from_json(s)));
    } catch (const json::exception& e) {
        throw Error(fmt::format("{}: malformed report: {}", dir.string(), e.what()));
    }
    return run;
}

std::string metrics_csv_header()
{
    return "strategy,seed,avg_acc,bwt,fwt,remembering,forgetting,drift_raw,drift_norm,capacity_params\n";
}

std::string metrics_csv_row(const CellReport& c)
{
    if (c.failed)
        return fmt::format("{},{},nan,nan,nan,nan,nan,nan,nan,nan\n", to_string(c.strategy), c.seed);
    return fmt::format("{},{},{},{},{},{},{},{},{},{}\n", to_string(c.strategy), c.seed, csv_real(c.metrics.avg_acc),
                       csv_real(c.metrics.bwt), csv_real(c.metrics.fwt), csv_real(c.metrics.remembering),
                       csv_real(c.metrics.forgetting), csv_real(c.drift_raw),
                       c.drift_norm ? csv_real(*c.drift_norm) : std::string(), c.capacity);
}

ExperimentReport run_experiment(const ExperimentConfig& config, const RunOptions& options)
{
    ExperimentConfig cfg = config;
    if (options.seed) {
        cfg.seed = *options.seed;
        cfg.replicates = 1;
    }
    if (options.out_dir)
        cfg.out_dir = *options.out_dir;
    cfg.validate();

    const auto start = std::chrono::steady_clock::now();
    const std::string hash = cfg.hash();
    const auto seeds = cfg.seeds();
    fs::create_directories(cfg.out_dir);

    ExperimentReport report;
    report.config_hash = hash;
    report.out_dir = cfg.out_dir;
    report.seeds.resize(seeds.size());

    const int jobs = std::clamp(options.jobs, 1, static_cast<int>(seeds.size()));
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(seeds.size());
    auto worker = [&] {
        for (std::size_t k = next++; k < seeds.size(); k = next++) {
            try {
                report.seeds[k] = run_seed(cfg, options, cfg.out_dir, seeds[k], hash);
            } catch (...) {
                errors[k] = std::current_exception();
            }
        }
    };
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j)
            pool.emplace_back(worker);
        for (auto& t : pool)
            t.join();
    }
    for (const auto& e : errors)
        if (e)
            std::rethrow_exception(e);
    report.seconds = seconds_since(start);

    const fs::path exp_dir = cfg.out_dir / fmt::format("experiment_{}", hash.substr(0, 12));
    fs::create_directories(exp_dir);
    std::string csv = metrics_csv_header();
    json seeds_json = json::array();
    for (const auto& sr : report.seeds) {
        json cells = json::array();
        for (const auto& c : sr.cells) {
            csv += metrics_csv_row(c);
            json cj = {{"strategy", to_string(c.strategy)}, {"failed", c.failed}, {"reused", c.reused},
                       {"seconds", c.seconds}};
            if (c.failed)
                cj["error"] = c.error;
            else
                cj["metrics"] = metrics_json(c);
            cells.push_back(cj);
        }
        json sj = {{"seed", sr.seed}, {"run_id", sr.run_id}, {"cells", cells}};
        sj["tradeoff"] = sr.tradeoff ? tradeoff_json(*sr.tradeoff) : json(nullptr);
        json ls = json::array();
        for (const auto& l : sr.landscapes)
            ls.push_back(landscape_json(l));
        sj["landscape"] = ls;
        seeds_json.push_back(sj);
    }
    write_text(exp_dir / "metrics.csv", csv);
    write_text(exp_dir / "config.ini", cfg.to_ini());
    json ej = {{"config_hash", hash},
               {"settings", settings_json(cfg)},
               {"seeds", seeds_json},
               {"aggregate", aggregate_json(cfg, report.seeds)},
               {"seconds", report.seconds}};
    write_json(exp_dir / "report.json", ej);
    return report;
}

Comparison compare_runs(const std::vector<fs::path>& run_dirs)
{
    Comparison out;
    out.csv = metrics_csv_header();
    std::map<std::string, std::pair<std::string, std::string>> capacity;
    std::vector<std::string> order;
    for (const auto& dir : run_dirs) {
        const auto path = dir / "metrics.csv";
        if (!fs::exists(path))
            throw Error(fmt::format("{} has no metrics.csv", dir.string()));
        std::istringstream in(read_text(path));
        std::string line;
        std::getline(in, line);
        if (line + "\n" != metrics_csv_header())
            throw Error(fmt::format("{}: unexpected metrics.csv header", path.string()));
        while (std::getline(in, line)) {
            if (line.empty())
                continue;
            out.csv += line + "\n";
            ++out.rows;
            const auto strategy = line.substr(0, line.find(','));
            const auto cap = line.substr(line.rfind(',') + 1);
            if (!capacity.count(strategy))
                order.push_back(strategy);
            capacity[strategy] = {cap, "0"};
        }
    }
    out.capacity = "strategy,capacity_params,replay_buffer\n";
    for (const auto& s : order)
        out.capacity += fmt::format("{},{},{}\n", s, capacity[s].first, capacity[s].second);
    return out;
}

LandscapeSummary export_landscape(const fs::path& dir, Strategy strategy, const TrajectoryStore& store,
                                  const std::vector<ParamSet>& finals, const Mlp& net, const TaskStream& stream,
                                  const LandscapeConfig& config, bool masked)
{
    fs::create_directories(dir);
    const auto shapes = finals.front().shapes();
    std::vector<std::vector<Example>> task_data;
    for (int t = 1; t <= stream.size(); ++t)
        task_data.push_back(examples_of(stream.task(t).test, masked));

    // grids of every task around `center` in `basis`
    auto grids_around = [&](const ParamSet& center, const PcaBasis& basis, const TrajectoryStore& points) {
        const auto origin = flatten(center);
        double h = config.half_range;
        if (h <= 0.0) {
            std::vector<std::pair<double, double>> proj;
            for (const auto& p : points.points())
                proj.push_back(project(p.params, origin, basis.delta.direction, basis.eta.direction));
            h = default_half_range(proj);
        }
        std::vector<LossGrid> grids;
        for (const auto& data : task_data)
            grids.push_back(loss_grid(net, center, basis.delta.direction, basis.eta.direction, data, h, config.steps));
        return grids;
    };

    LandscapeSummary summary;
    summary.strategy = strategy;
    const bool multi = finals.size() > 1;
    if (!multi) {
        const auto basis = pca_top2(store);
        auto grids = grids_around(finals.front(), basis, store);
        summary.basin_shift.push_back(grids.size() >= 2 ? basin_shift_fraction(grids) : 0.0);
        grids = normalize_grids(std::move(grids));
        for (std::size_t t = 0; t < grids.size(); ++t)
            write_grid_csv(dir / fmt::format("task_{}.csv", t + 1), grids[t]);
        write_trajectory_csv(dir / "trajectory.csv", store, flatten(finals.front()), basis, false);
        write_directions(dir / "directions.bin", basis, shapes);
    } else {
        for (std::size_t i = 0; i < finals.size(); ++i) {
            const auto mode_dir = dir / fmt::format("mode_{}", i);
            fs::create_directories(mode_dir);
            const auto points = store.mode(static_cast<int>(i));
            const auto basis = pca_top2(points);
            auto grids = grids_around(finals[i], basis, points);
            summary.basin_shift.push_back(grids.size() >= 2 ? basin_shift_fraction(grids) : 0.0);
            grids = normalize_grids(std::move(grids));
            for (std::size_t t = 0; t < grids.size(); ++t)
                write_grid_csv(mode_dir / fmt::format("task_{}.csv", t + 1), grids[t]);
            write_trajectory_csv(mode_dir / "trajectory.csv", points, flatten(finals[i]), basis, false);
            write_directions(mode_dir / "directions.bin", basis, shapes);
        }
        const auto shared_dir = dir / "shared";
        fs::create_directories(shared_dir);
        const auto basis = pca_top2(store);
        std::vector<LossGrid> all;
        for (std::size_t i = 0; i < finals.size(); ++i) {
            auto grids = grids_around(finals[i], basis, store);
            all.insert(all.end(), grids.begin(), grids.end());
        }
        all = normalize_grids(std::move(all));
        const std::size_t tasks = task_data.size();
        for (std::size_t k = 0; k < all.size(); ++k)
            write_grid_csv(shared_dir / fmt::format("mode_{}_task_{}.csv", k / tasks, k % tasks + 1), all[k]);
        write_trajectory_csv(shared_dir / "trajectory.csv", store, flatten(finals.front()), basis, true);
        write_directions(shared_dir / "directions.bin", basis, shapes);
    }
    write_json(dir / "summary.json", landscape_json(summary));
    return summary;
}

LandscapeSummary landscape_for_run(const fs::path& run_dir, Strategy strategy)
{
    const auto manifest = read_json(run_dir / "run.json");
    const auto cfg = load_config(run_dir / "config.ini");
    const auto seed = manifest.at("seed").get<std::uint64_t>();
    const auto options = cfg.resolved_options();
    const TaskStream stream = make_stream(cfg.stream_for(seed));
    auto cap = capture(strategy, stream, options, seed, {});
    LandscapeConfig lc = cfg.landscape;
    return export_landscape(run_dir / "landscape" / to_string(strategy), strategy, cap.store, cap.run.snapshots.back(),
                            cap.net, stream, lc, options.masked);
}

} // namespace mota
