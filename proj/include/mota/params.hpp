#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace mota {

enum class Activation { relu, tanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// Dense layer of shape out x in; stored as a row-major weight block followed
/// by the bias.
struct LayerShape {
    int out = 0;
    int in = 0;

    std::size_t weight_count() const { return static_cast<std::size_t>(out) * static_cast<std::size_t>(in); }
    std::size_t size() const { return weight_count() + static_cast<std::size_t>(out); }
    bool operator==(const LayerShape&) const = default;
};

struct NetworkSpec {
    int input_dim = 16;
    std::vector<int> hidden_dims{32, 32};
    int output_dim = 10;
    Activation activation = Activation::relu;

    /// Throws ConfigError when a dimension is out of range.
    void validate() const;
    std::vector<LayerShape> layer_shapes() const;
    bool operator==(const NetworkSpec&) const = default;
};

/// Parameters of a feed-forward network as one flat buffer with per-layer
/// views. The same type carries gradients and Fisher diagonals.
class ParamSet {
public:
    ParamSet() = default;
    explicit ParamSet(std::vector<LayerShape> shapes);

    static ParamSet zeros_like(const ParamSet& other) { return ParamSet(other.shapes_); }

    const std::vector<LayerShape>& shapes() const { return shapes_; }
    std::size_t layer_count() const { return shapes_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    /// Weights and bias of layer l, contiguous.
    std::span<double> layer(std::size_t l);
    std::span<const double> layer(std::size_t l) const;
    std::span<double> weights(std::size_t l);
    std::span<const double> weights(std::size_t l) const;
    std::span<double> bias(std::size_t l);
    std::span<const double> bias(std::size_t l) const;

    bool same_shape(const ParamSet& other) const { return shapes_ == other.shapes_; }
    bool all_finite() const;

    bool operator==(const ParamSet& other) const = default;

private:
    std::vector<LayerShape> shapes_;
    std::vector<std::size_t> offsets_;
    std::vector<double> data_;
};

using GradSet = ParamSet;

void require_same_shape(const ParamSet& a, const ParamSet& b, const char* what);

/// a*x + y element-wise.
ParamSet axpy(double a, const ParamSet& x, const ParamSet& y);
std::vector<double> flatten(const ParamSet& params);
/// Inverse of flatten for a known layout.
ParamSet unflatten(std::span<const double> flat, const std::vector<LayerShape>& shapes);
std::size_t dims(const ParamSet& params);
std::size_t dims(const NetworkSpec& spec);

/// Dimension-normalised squared Euclidean distance (1/|theta|) sum_d (a_d - b_d)^2.
double mean_squared_distance(const ParamSet& a, const ParamSet& b);

/// Uniform Glorot initialisation, deterministic in seed.
ParamSet init_params(const NetworkSpec& spec, std::uint64_t seed);

// Binary format: u64 layer count, then (u64 out, u64 in) per layer, then the
// flat little-endian f64 payload.
void write_params(std::ostream& out, const ParamSet& params);
ParamSet read_params(std::istream& in);
void save_params(const std::filesystem::path& path, const ParamSet& params);
ParamSet load_params(const std::filesystem::path& path);

} // namespace mota
