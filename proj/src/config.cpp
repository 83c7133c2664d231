#include "mota/config.hpp"

#include "mota/errors.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <openssl/evp.h>

namespace mota {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ','))
        if (auto t = trim(item); !t.empty())
            out.push_back(t);
    return out;
}

long long to_integer(const std::string& field, const std::string& v)
{
    long long x = 0;
    const auto* end = v.data() + v.size();
    const auto [p, ec] = std::from_chars(v.data(), end, x);
    if (ec != std::errc() || p != end)
        throw ConfigError(fmt::format("{}: expected an integer, got '{}'", field, v));
    return x;
}

double to_real(const std::string& field, const std::string& v)
{
    std::size_t used = 0;
    double x = 0.0;
    try {
        x = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size())
        throw ConfigError(fmt::format("{}: expected a number, got '{}'", field, v));
    return x;
}

bool to_bool(const std::string& field, const std::string& v)
{
    if (v == "true" || v == "1" || v == "yes" || v == "on")
        return true;
    if (v == "false" || v == "0" || v == "no" || v == "off")
        return false;
    throw ConfigError(fmt::format("{}: expected true or false, got '{}'", field, v));
}

std::vector<int> to_dims(const std::string& field, const std::string& v)
{
    std::vector<int> out;
    for (const auto& item : split_list(v))
        out.push_back(static_cast<int>(to_integer(field, item)));
    return out;
}

std::vector<Strategy> to_strategies(const std::string& field, const std::string& v)
{
    std::vector<Strategy> out;
    for (const auto& item : split_list(v)) {
        Strategy s;
        try {
            s = strategy_from_string(item);
        } catch (const ConfigError&) {
            throw ConfigError(fmt::format("{}: unknown strategy '{}'", field, item));
        }
        if (std::find(out.begin(), out.end(), s) != out.end())
            throw ConfigError(fmt::format("{}: strategy '{}' listed twice", field, item));
        out.push_back(s);
    }
    return out;
}

std::string real(double x)
{
    return fmt::format("{:.17g}", x);
}

std::string join_dims(const std::vector<int>& d)
{
    return fmt::format("{}", fmt::join(d, ","));
}

std::string join_strategies(const std::vector<Strategy>& s)
{
    std::vector<std::string> names;
    for (Strategy k : s)
        names.push_back(to_string(k));
    return fmt::format("{}", fmt::join(names, ","));
}

using Setter = std::function<void(ExperimentConfig&, const std::string& field, const std::string& value)>;
using Getter = std::function<std::string(const ExperimentConfig&)>;

struct Key {
    Setter set;
    Getter get;
};

const std::map<std::string, std::map<std::string, Key>>& schema()
{
    using C = ExperimentConfig;
    using S = std::string;
    static const std::map<std::string, std::map<std::string, Key>> keys = {
        {"stream",
         {
             {"kind", {[](C& c, const S&, const S& v) {
                           try {
                               c.stream.kind = shift_kind_from_string(v);
                           } catch (const Error&) {
                               throw ConfigError(fmt::format("stream.kind: unknown shift kind '{}'", v));
                           }
                       },
                       [](const C& c) { return to_string(c.stream.kind); }}},
             {"tasks", {[](C& c, const S& f, const S& v) { c.stream.tasks = static_cast<int>(to_integer(f, v)); },
                        [](const C& c) { return std::to_string(c.stream.tasks); }}},
             {"classes_per_task",
              {[](C& c, const S& f, const S& v) { c.stream.classes_per_task = static_cast<int>(to_integer(f, v)); },
               [](const C& c) { return std::to_string(c.stream.classes_per_task); }}},
             {"samples_per_class",
              {[](C& c, const S& f, const S& v) { c.stream.samples_per_class = static_cast<int>(to_integer(f, v)); },
               [](const C& c) { return std::to_string(c.stream.samples_per_class); }}},
             {"input_dim", {[](C& c, const S& f, const S& v) { c.stream.input_dim = static_cast<int>(to_integer(f, v)); },
                            [](const C& c) { return std::to_string(c.stream.input_dim); }}},
             {"sigma", {[](C& c, const S& f, const S& v) { c.stream.sigma = to_real(f, v); },
                        [](const C& c) { return real(c.stream.sigma); }}},
             {"mean_range", {[](C& c, const S& f, const S& v) { c.stream.mean_range = to_real(f, v); },
                             [](const C& c) { return real(c.stream.mean_range); }}},
         }},
        {"network",
         {
             {"hidden", {[](C& c, const S& f, const S& v) { c.options.network.hidden_dims = to_dims(f, v); },
                         [](const C& c) { return join_dims(c.options.network.hidden_dims); }}},
             {"activation", {[](C& c, const S&, const S& v) {
                                 try {
                                     c.options.network.activation = activation_from_string(v);
                                 } catch (const Error&) {
                                     throw ConfigError(fmt::format("network.activation: unknown activation '{}'", v));
                                 }
                                 c.options.mode_network.activation = c.options.network.activation;
                             },
                             [](const C& c) { return to_string(c.options.network.activation); }}},
             {"pretext_epochs", {[](C& c, const S& f, const S& v) {
                                     c.options.pretext_epochs = static_cast<int>(to_integer(f, v));
                                 },
                                 [](const C& c) { return std::to_string(c.options.pretext_epochs); }}},
         }},
        {"train",
         {
             {"epochs", {[](C& c, const S& f, const S& v) { c.options.train.epochs = static_cast<int>(to_integer(f, v)); },
                         [](const C& c) { return std::to_string(c.options.train.epochs); }}},
             {"lr", {[](C& c, const S& f, const S& v) { c.options.train.lr = to_real(f, v); },
                     [](const C& c) { return real(c.options.train.lr); }}},
             {"batch_size",
              {[](C& c, const S& f, const S& v) { c.options.train.batch_size = static_cast<int>(to_integer(f, v)); },
               [](const C& c) { return std::to_string(c.options.train.batch_size); }}},
             {"masked", {[](C& c, const S& f, const S& v) { c.options.masked = to_bool(f, v); },
                         [](const C& c) { return std::string(c.options.masked ? "true" : "false"); }}},
         }},
        {"mota",
         {
             {"modes", {[](C& c, const S& f, const S& v) { c.options.modes = static_cast<int>(to_integer(f, v)); },
                        [](const C& c) { return std::to_string(c.options.modes); }}},
             {"mode_hidden", {[](C& c, const S& f, const S& v) { c.options.mode_network.hidden_dims = to_dims(f, v); },
                              [](const C& c) { return join_dims(c.options.mode_network.hidden_dims); }}},
             {"beta_max", {[](C& c, const S& f, const S& v) { c.options.beta_max = to_real(f, v); },
                           [](const C& c) { return real(c.options.beta_max); }}},
             {"beta_min", {[](C& c, const S& f, const S& v) { c.options.beta_min = to_real(f, v); },
                           [](const C& c) { return real(c.options.beta_min); }}},
             {"drift_weight", {[](C& c, const S& f, const S& v) { c.options.drift_weight = to_real(f, v); },
                               [](const C& c) { return real(c.options.drift_weight); }}},
             {"enumeration_cap",
              {[](C& c, const S& f, const S& v) {
                   const auto x = to_integer(f, v);
                   if (x < 1)
                       throw ConfigError("mota.enumeration_cap must be >= 1");
                   c.options.enumeration_cap = static_cast<std::size_t>(x);
               },
               [](const C& c) { return std::to_string(c.options.enumeration_cap); }}},
             {"fisher_samples",
              {[](C& c, const S& f, const S& v) {
                   const auto x = to_integer(f, v);
                   if (x < 0)
                       throw ConfigError("mota.fisher_samples must be >= 0");
                   c.options.fisher_samples = static_cast<std::size_t>(x);
               },
               [](const C& c) { return std::to_string(c.options.fisher_samples); }}},
         }},
        {"baselines",
         {
             {"ewc_lambda", {[](C& c, const S& f, const S& v) { c.options.ewc_lambda = to_real(f, v); },
                             [](const C& c) { return real(c.options.ewc_lambda); }}},
             {"ensemble_modes",
              {[](C& c, const S& f, const S& v) { c.options.ensemble_modes = static_cast<int>(to_integer(f, v)); },
               [](const C& c) { return std::to_string(c.options.ensemble_modes); }}},
         }},
        {"experiment",
         {
             {"strategies", {[](C& c, const S& f, const S& v) { c.strategies = to_strategies(f, v); },
                             [](const C& c) { return join_strategies(c.strategies); }}},
             {"seed", {[](C& c, const S& f, const S& v) {
                           const auto x = to_integer(f, v);
                           if (x < 0)
                               throw ConfigError("experiment.seed must be >= 0");
                           c.seed = static_cast<std::uint64_t>(x);
                       },
                       [](const C& c) { return std::to_string(c.seed); }}},
             {"replicates", {[](C& c, const S& f, const S& v) { c.replicates = static_cast<int>(to_integer(f, v)); },
                             [](const C& c) { return std::to_string(c.replicates); }}},
             {"out_dir", {[](C& c, const S&, const S& v) { c.out_dir = v; }, {}}},
             {"save_checkpoints", {[](C& c, const S& f, const S& v) { c.save_checkpoints = to_bool(f, v); },
                                   [](const C& c) { return std::string(c.save_checkpoints ? "true" : "false"); }}},
         }},
        {"metrics",
         {
             {"drift_reference", {[](C& c, const S& f, const S& v) {
                                      const auto s = to_strategies(f, v);
                                      if (s.size() != 1)
                                          throw ConfigError("metrics.drift_reference: expected one strategy");
                                      c.drift_reference = s.front();
                                  },
                                  [](const C& c) { return to_string(c.drift_reference); }}},
             {"tradeoff", {[](C& c, const S& f, const S& v) { c.tradeoff = to_bool(f, v); },
                           [](const C& c) { return std::string(c.tradeoff ? "true" : "false"); }}},
             {"tradeoff_baseline", {[](C& c, const S& f, const S& v) {
                                        const auto s = to_strategies(f, v);
                                        if (s.size() != 1)
                                            throw ConfigError("metrics.tradeoff_baseline: expected one strategy");
                                        c.tradeoff_baseline = s.front();
                                    },
                                    [](const C& c) { return to_string(c.tradeoff_baseline); }}},
         }},
        {"landscape",
         {
             {"enabled", {[](C& c, const S& f, const S& v) { c.landscape.enabled = to_bool(f, v); },
                          [](const C& c) { return std::string(c.landscape.enabled ? "true" : "false"); }}},
             {"strategies", {[](C& c, const S& f, const S& v) { c.landscape.strategies = to_strategies(f, v); },
                             [](const C& c) { return join_strategies(c.landscape.strategies); }}},
             {"steps", {[](C& c, const S& f, const S& v) { c.landscape.steps = static_cast<int>(to_integer(f, v)); },
                        [](const C& c) { return std::to_string(c.landscape.steps); }}},
             {"half_range", {[](C& c, const S& f, const S& v) { c.landscape.half_range = to_real(f, v); },
                             [](const C& c) { return real(c.landscape.half_range); }}},
         }},
    };
    return keys;
}

} // namespace

std::vector<std::uint64_t> ExperimentConfig::seeds() const
{
    std::vector<std::uint64_t> out;
    for (int r = 0; r < replicates; ++r)
        out.push_back(seed + static_cast<std::uint64_t>(r));
    return out;
}

StreamSpec ExperimentConfig::stream_for(std::uint64_t s) const
{
    StreamSpec spec = stream;
    spec.seed = s;
    return spec;
}

StrategyOptions ExperimentConfig::resolved_options() const
{
    StrategyOptions o = options;
    const int classes = stream.kind == ShiftKind::task_il ? stream.tasks * stream.classes_per_task : stream.classes_per_task;
    o.network.input_dim = o.mode_network.input_dim = stream.input_dim;
    o.network.output_dim = o.mode_network.output_dim = classes;
    o.mode_network.activation = o.network.activation;
    return o;
}

void ExperimentConfig::validate() const
{
    try {
        stream.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    const auto o = resolved_options();
    auto check_net = [](const NetworkSpec& n, const char* field) {
        try {
            n.validate();
        } catch (const Error& e) {
            throw ConfigError(fmt::format("{}: {}", field, e.what()));
        }
    };
    check_net(o.network, "network.hidden");
    check_net(o.mode_network, "mota.mode_hidden");
    if (o.train.epochs < 0)
        throw ConfigError("train.epochs must be >= 0");
    if (o.pretext_epochs < 0)
        throw ConfigError("network.pretext_epochs must be >= 0");
    if (!(o.train.lr > 0.0))
        throw ConfigError("train.lr must be positive");
    if (o.train.batch_size < 1)
        throw ConfigError("train.batch_size must be >= 1");
    if (o.modes < 1)
        throw ConfigError("mota.modes must be >= 1");
    if (o.ensemble_modes < 1)
        throw ConfigError("baselines.ensemble_modes must be >= 1");
    if (o.beta_max < 0.0)
        throw ConfigError("mota.beta_max must be >= 0");
    if (o.beta_min < 0.0)
        throw ConfigError("mota.beta_min must be >= 0");
    if (o.drift_weight < 0.0)
        throw ConfigError("mota.drift_weight must be >= 0");
    if (o.ewc_lambda < 0.0)
        throw ConfigError("baselines.ewc_lambda must be >= 0");
    if (strategies.empty())
        throw ConfigError("experiment.strategies must not be empty");
    if (replicates < 1)
        throw ConfigError("experiment.replicates must be >= 1");
    if (landscape.steps < 3 || landscape.steps % 2 == 0)
        throw ConfigError("landscape.steps must be odd and >= 3");
    if (landscape.half_range < 0.0)
        throw ConfigError("landscape.half_range must be >= 0");
    if (is_multi_mode(tradeoff_baseline))
        throw ConfigError("metrics.tradeoff_baseline must be a single-mode strategy");

    const std::size_t single = dims(o.network);
    for (Strategy s : strategies) {
        if (!is_multi_mode(s))
            continue;
        const std::size_t cap = strategy_capacity(s, o);
        if (cap > single)
            throw ConfigError(fmt::format("mota.mode_hidden: {} uses {} parameters, more than the single model's {}",
                                          to_string(s), cap, single));
    }
}

std::string ExperimentConfig::canonical() const
{
    std::string out;
    for (const auto& [section, keys] : schema())
        for (const auto& [key, k] : keys)
            if (k.get)
                out += fmt::format("{}.{}={}\n", section, key, k.get(*this));
    return out;
}

std::string ExperimentConfig::hash() const
{
    return sha256_hex(canonical());
}

std::string ExperimentConfig::to_ini() const
{
    std::string out;
    for (const auto& [section, keys] : schema()) {
        out += fmt::format("[{}]\n", section);
        for (const auto& [key, k] : keys)
            out += fmt::format("{} = {}\n", key, k.get ? k.get(*this) : out_dir.string());
        out += "\n";
    }
    return out;
}

ExperimentConfig parse_config(const std::string& text)
{
    boost::property_tree::ptree tree;
    std::istringstream in(text);
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(fmt::format("config syntax error at line {}: {}", e.line(), e.message()));
    }
    ExperimentConfig cfg;
    const auto& keys = schema();
    for (const auto& [section, body] : tree) {
        const auto sec = keys.find(section);
        if (sec == keys.end()) {
            if (!body.data().empty())
                throw ConfigError(fmt::format("{}: key outside any section", section));
            throw ConfigError(fmt::format("{}: unknown section", section));
        }
        for (const auto& [key, value] : body) {
            const auto field = fmt::format("{}.{}", section, key);
            const auto k = sec->second.find(key);
            if (k == sec->second.end())
                throw ConfigError(fmt::format("{}: unknown key", field));
            k->second.set(cfg, field, trim(value.get_value<std::string>()));
        }
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError(fmt::format("cannot read config file {}", path.string()));
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string sha256_hex(const std::string& data)
{
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 computation failed");
    std::string hex;
    for (unsigned int i = 0; i < len; ++i)
        hex += fmt::format("{:02x}", digest[i]);
    return hex;
}

} // namespace mota
