#include "llie/params.hpp"

#include <cmath>

#include "llie/ops.hpp"

namespace llie {

Var ParamStore::add(const std::string& name, Tensor init) {
    if (index_.count(name)) {
        throw UsageError("duplicate parameter name " + name);
    }
    index_[name] = entries_.size();
    entries_.emplace_back(name, Var(std::move(init), true));
    return entries_.back().second;
}

const Var& ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw UsageError("unknown parameter " + name);
    }
    return entries_[it->second].second;
}

std::size_t ParamStore::numel() const {
    std::size_t total = 0;
    for (const auto& [name, v] : entries_) total += v.value().size();
    return total;
}

void ParamStore::zero_grad() {
    for (auto& [name, v] : entries_) {
        Var handle = v;
        handle.zero_grad();
    }
}

void ParamStore::set_requires_grad(bool on) {
    for (auto& [name, v] : entries_) {
        Var handle = v;
        handle.set_requires_grad(on);
    }
}

void ParamStore::copy_values_from(const ParamStore& other) {
    if (other.size() != size()) {
        throw UsageError("parameter stores differ in size");
    }
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& [name, src] = other.entries_[i];
        if (name != entries_[i].first || src.shape() != entries_[i].second.shape()) {
            throw UsageError("parameter mismatch at " + name);
        }
        Var dst = entries_[i].second;
        dst.mutable_value() = src.value();
    }
}

Tensor Initializer::normal(Shape shape, int fan_in, double gain) {
    std::normal_distribution<double> dist(0.0, gain / std::sqrt(static_cast<double>(fan_in)));
    Tensor t(shape);
    for (auto& v : t.values()) v = dist(rng_);
    return t;
}

double leaky_gain(double slope) { return std::sqrt(2.0 / (1.0 + slope * slope)); }

Var Conv2d::operator()(const Var& x) const { return ops::conv2d(x, weight, bias, stride, pad); }

Conv2d make_conv(ParamStore& store, Initializer& init, const std::string& name, const ConvSpec& spec) {
    Conv2d conv;
    const Shape ws{spec.out, spec.in, spec.kernel, spec.kernel};
    conv.weight = store.add(name + ".weight", spec.zero_init
                                                  ? Tensor(ws)
                                                  : init.normal(ws, spec.in * spec.kernel * spec.kernel,
                                                                spec.gain));
    if (spec.bias) {
        conv.bias = store.add(name + ".bias", Tensor({1, spec.out, 1, 1}));
    }
    conv.stride = spec.stride;
    conv.pad = spec.kernel / 2;
    return conv;
}

Var DepthwiseConv::operator()(const Var& x) const { return ops::depthwise_conv2d(x, weight, bias); }

DepthwiseConv make_depthwise(ParamStore& store, Initializer& init, const std::string& name, int channels,
                             int kernel) {
    DepthwiseConv dw;
    dw.weight = store.add(name + ".weight", init.normal({channels, 1, kernel, kernel}, kernel * kernel, 1.0));
    dw.bias = store.add(name + ".bias", Tensor({1, channels, 1, 1}));
    return dw;
}

Var LayerNorm::operator()(const Var& x) const { return ops::layer_norm_channels(x, gamma, beta, eps); }

LayerNorm make_layer_norm(ParamStore& store, const std::string& name, int channels) {
    LayerNorm ln;
    ln.gamma = store.add(name + ".gamma", Tensor({1, channels, 1, 1}, 1.0));
    ln.beta = store.add(name + ".beta", Tensor({1, channels, 1, 1}));
    return ln;
}

}  // namespace llie
