#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "llie/params.hpp"

namespace llie {

/// Guided U-Net. The decoder has one layer per encoder level, starting at
/// the bottleneck.
struct SgemConfig {
    int depth = 3;
    int base_channels = 16;
    std::vector<int> channel_multipliers{1, 2, 4};
    int image_channels = 3;
    int kernel_size = 3;
    int guide_hidden = 16;
    double eps = 1e-5;

    void validate() const;
    int channels(int level) const { return base_channels * channel_multipliers.at(level); }
    int size_multiple() const { return 1 << (depth - 1); }
    /// Encoder level processed by decoder layer j.
    int layer_level(int j) const { return depth - 1 - j; }
};

void to_json(nlohmann::json& j, const SgemConfig& c);
void from_json(const nlohmann::json& j, SgemConfig& c);

/// Per-layer guidance tensors captured during a forward pass.
struct GuidanceTrace {
    Tensor kernels;  // (B, b*k*k, p, q)
    Tensor alpha;    // (B, b, p, q)
    Tensor gamma;    // (B, b, p, q)
    Tensor guided;   // normalized, modulated features
};

/// d_hat[c, y, x] = sum_{u,v} K[c, u, v, y, x] * d[c, y + u - k/2, x + v - k/2],
/// zero outside the map.
Var sgc_apply(const Var& features, const Var& kernels, int kernel_size);

/// instance_norm(d_hat) * alpha + gamma.
Var sgn_apply(const Var& features, const Var& alpha, const Var& gamma, double eps);

class Sgem {
public:
    Sgem(const SgemConfig& config, std::uint64_t seed);

    /// Per-pixel depthwise kernels, softmax-normalized over the k*k taps.
    /// `edge` is the structure map already resized to the layer's dims.
    Var sgc_synthesize(int layer, const Var& edge) const;
    /// (alpha, gamma) with alpha = 1 + head output.
    std::pair<Var, Var> sgn_synthesize(int layer, const Var& edge) const;

    /// clamp(appearance + residual(concat(appearance, image) | edge), 0, 1).
    /// Without guidance the decoder runs its plain convolutions only.
    Var forward(const Var& appearance, const Var& image, const Var& edge, bool use_guidance = true,
                std::vector<GuidanceTrace>* trace = nullptr) const;

    const SgemConfig& config() const { return config_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

private:
    struct Pair {
        Conv2d conv0, conv1;
    };
    struct Guide {
        Conv2d kernel_hidden, kernel_out;
        Conv2d norm_hidden, norm_out;
    };

    SgemConfig config_;
    ParamStore params_;
    std::vector<Pair> enc_;
    std::vector<Conv2d> down_;
    std::vector<Pair> dec_;
    std::vector<Guide> guide_;
    std::vector<Conv2d> up_;
    std::vector<Conv2d> merge_;
    Conv2d head_;
};

}  // namespace llie
