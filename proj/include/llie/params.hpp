#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "llie/autograd.hpp"

namespace llie {

/// Ordered, named collection of trainable leaves owned by one network.
class ParamStore {
public:
    ParamStore() = default;
    ParamStore(const ParamStore&) = delete;
    ParamStore& operator=(const ParamStore&) = delete;
    ParamStore(ParamStore&&) = default;
    ParamStore& operator=(ParamStore&&) = default;

    Var add(const std::string& name, Tensor init);
    const Var& get(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    const std::vector<std::pair<std::string, Var>>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    /// Total number of scalar parameters.
    std::size_t numel() const;

    void zero_grad();
    void set_requires_grad(bool on);

    /// Copies every value from `other`; names and shapes must match.
    void copy_values_from(const ParamStore& other);

private:
    std::vector<std::pair<std::string, Var>> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Deterministic fan-in scaled initializer.
class Initializer {
public:
    explicit Initializer(std::uint64_t seed) : rng_(seed) {}

    /// Normal(0, gain / sqrt(fan_in)).
    Tensor normal(Shape shape, int fan_in, double gain);
    std::mt19937_64& rng() { return rng_; }

private:
    std::mt19937_64 rng_;
};

/// Gain for leaky-rectifier layers with the given negative slope.
double leaky_gain(double slope);

inline constexpr double kLeakySlope = 0.2;

/// Dense convolution layer (linear layers are 1x1 convolutions on
/// (N, C, 1, 1) tensors).
struct Conv2d {
    Var weight;
    Var bias;
    int stride = 1;
    int pad = 0;

    Var operator()(const Var& x) const;
    int in_channels() const { return weight.shape().c; }
    int out_channels() const { return weight.shape().n; }
};

struct ConvSpec {
    int in = 0;
    int out = 0;
    int kernel = 3;
    int stride = 1;
    bool bias = true;
    double gain = 1.0;
    bool zero_init = false;
};

/// Registers `<name>.weight` (and `<name>.bias`) in `store`. Padding is
/// kernel/2 so stride-1 layers keep spatial size.
Conv2d make_conv(ParamStore& store, Initializer& init, const std::string& name, const ConvSpec& spec);

struct DepthwiseConv {
    Var weight;
    Var bias;
    Var operator()(const Var& x) const;
};

DepthwiseConv make_depthwise(ParamStore& store, Initializer& init, const std::string& name, int channels,
                             int kernel);

struct LayerNorm {
    Var gamma;
    Var beta;
    double eps = 1e-5;
    Var operator()(const Var& x) const;
};

LayerNorm make_layer_norm(ParamStore& store, const std::string& name, int channels);

}  // namespace llie
