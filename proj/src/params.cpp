#include "mota/params.hpp"

#include "mota/errors.hpp"
#include "mota/rng.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include <fmt/format.h>

namespace mota {

static_assert(std::endian::native == std::endian::little, "parameter files assume a little-endian host");

std::string to_string(Activation a)
{
    return a == Activation::relu ? "relu" : "tanh";
}

Activation activation_from_string(const std::string& s)
{
    if (s == "relu")
        return Activation::relu;
    if (s == "tanh")
        return Activation::tanh;
    throw ConfigError(fmt::format("network.activation: unknown activation '{}'", s));
}

void NetworkSpec::validate() const
{
    if (input_dim < 1)
        throw ConfigError("network.input_dim must be >= 1");
    if (output_dim < 2)
        throw ConfigError("network.output_dim must be >= 2");
    for (int h : hidden_dims)
        if (h < 1)
            throw ConfigError("network.hidden entries must be >= 1");
}

std::vector<LayerShape> NetworkSpec::layer_shapes() const
{
    std::vector<LayerShape> shapes;
    int in = input_dim;
    for (int h : hidden_dims) {
        shapes.push_back({h, in});
        in = h;
    }
    shapes.push_back({output_dim, in});
    return shapes;
}

ParamSet::ParamSet(std::vector<LayerShape> shapes)
    : shapes_(std::move(shapes))
{
    std::size_t total = 0;
    for (std::size_t l = 0; l < shapes_.size(); ++l) {
        if (l > 0 && shapes_[l].in != shapes_[l - 1].out)
            throw ShapeError(fmt::format("layer {} input {} does not match previous output {}", l,
                                         shapes_[l].in, shapes_[l - 1].out));
        offsets_.push_back(total);
        total += shapes_[l].size();
    }
    data_.assign(total, 0.0);
}

std::span<double> ParamSet::layer(std::size_t l)
{
    return std::span<double>(data_).subspan(offsets_.at(l), shapes_[l].size());
}

std::span<const double> ParamSet::layer(std::size_t l) const
{
    return std::span<const double>(data_).subspan(offsets_.at(l), shapes_[l].size());
}

std::span<double> ParamSet::weights(std::size_t l)
{
    return layer(l).first(shapes_[l].weight_count());
}

std::span<const double> ParamSet::weights(std::size_t l) const
{
    return layer(l).first(shapes_[l].weight_count());
}

std::span<double> ParamSet::bias(std::size_t l)
{
    return layer(l).subspan(shapes_[l].weight_count());
}

std::span<const double> ParamSet::bias(std::size_t l) const
{
    return layer(l).subspan(shapes_[l].weight_count());
}

bool ParamSet::all_finite() const
{
    for (double v : data_)
        if (!std::isfinite(v))
            return false;
    return true;
}

void require_same_shape(const ParamSet& a, const ParamSet& b, const char* what)
{
    if (!a.same_shape(b))
        throw ShapeError(fmt::format("{}: parameter layouts differ", what));
}

ParamSet axpy(double a, const ParamSet& x, const ParamSet& y)
{
    require_same_shape(x, y, "axpy");
    ParamSet out = y;
    auto o = out.values();
    auto xv = x.values();
    for (std::size_t i = 0; i < o.size(); ++i)
        o[i] += a * xv[i];
    return out;
}

std::vector<double> flatten(const ParamSet& params)
{
    auto v = params.values();
    return {v.begin(), v.end()};
}

ParamSet unflatten(std::span<const double> flat, const std::vector<LayerShape>& shapes)
{
    ParamSet out(shapes);
    if (flat.size() != out.size())
        throw ShapeError(fmt::format("unflatten: {} values for a layout of {}", flat.size(), out.size()));
    std::copy(flat.begin(), flat.end(), out.values().begin());
    return out;
}

std::size_t dims(const ParamSet& params)
{
    return params.size();
}

std::size_t dims(const NetworkSpec& spec)
{
    std::size_t n = 0;
    for (const auto& s : spec.layer_shapes())
        n += s.size();
    return n;
}

double mean_squared_distance(const ParamSet& a, const ParamSet& b)
{
    require_same_shape(a, b, "mean_squared_distance");
    if (a.size() == 0)
        throw ArgumentError("mean_squared_distance: empty parameter set");
    auto av = a.values();
    auto bv = b.values();
    double s = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        const double d = av[i] - bv[i];
        s += d * d;
    }
    return s / static_cast<double>(av.size());
}

ParamSet init_params(const NetworkSpec& spec, std::uint64_t seed)
{
    spec.validate();
    ParamSet p(spec.layer_shapes());
    Rng rng(seed);
    for (std::size_t l = 0; l < p.layer_count(); ++l) {
        const auto& s = p.shapes()[l];
        const double bound = std::sqrt(6.0 / static_cast<double>(s.in + s.out));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (double& w : p.weights(l))
            w = dist(rng);
        // biases start at zero
    }
    return p;
}

namespace {

void write_u64(std::ostream& out, std::uint64_t v)
{
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint64_t read_u64(std::istream& in)
{
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in)
        throw ShapeError("parameter file truncated in header");
    return v;
}

} // namespace

void write_params(std::ostream& out, const ParamSet& params)
{
    write_u64(out, params.layer_count());
    for (const auto& s : params.shapes()) {
        write_u64(out, static_cast<std::uint64_t>(s.out));
        write_u64(out, static_cast<std::uint64_t>(s.in));
    }
    auto v = params.values();
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size_bytes()));
}

ParamSet read_params(std::istream& in)
{
    const std::uint64_t count = read_u64(in);
    if (count == 0 || count > 1024)
        throw ShapeError(fmt::format("implausible layer count {}", count));
    std::vector<LayerShape> shapes;
    for (std::uint64_t l = 0; l < count; ++l) {
        const auto out = read_u64(in);
        const auto inn = read_u64(in);
        shapes.push_back({static_cast<int>(out), static_cast<int>(inn)});
    }
    ParamSet p(std::move(shapes));
    auto v = p.values();
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size_bytes()));
    if (!in)
        throw ShapeError("parameter file truncated in payload");
    return p;
}

void save_params(const std::filesystem::path& path, const ParamSet& params)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error(fmt::format("cannot open {} for writing", path.string()));
    write_params(out, params);
}

ParamSet load_params(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(fmt::format("cannot open {}", path.string()));
    return read_params(in);
}

} // namespace mota
