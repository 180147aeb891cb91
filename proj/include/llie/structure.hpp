#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "llie/params.hpp"

namespace llie {

struct StructureConfig {
    int in_channels = 3;
    /// Encoder levels N; the pyramid holds N + 1 maps.
    int num_levels = 3;
    /// Channels of f_1..f_N; f_{N+1} keeps the last width.
    std::vector<int> channels{16, 32, 64};
    int window_size = 8;
    int heads = 2;
    double mlp_ratio = 2.0;
    int dim_z = 128;
    int dim_w = 128;
    int mapping_layers = 2;
    /// Generator block widths from lowest to highest resolution. Empty
    /// means the pyramid widths in reverse order.
    std::vector<int> generator_channels;

    void validate() const;
    int level_channels(int level) const;  // 0-based pyramid index, 0..N
    std::vector<int> resolved_generator_channels() const;
    int size_multiple() const { return 1 << num_levels; }
};

void to_json(nlohmann::json& j, const StructureConfig& c);
void from_json(const nlohmann::json& j, StructureConfig& c);

/// Branch 0 carries content features, branch 1 + k the gradient map along
/// ops::kDirections[k].
inline constexpr int kBranches = 9;

/// Windowed transformer block followed by a convolution-augmented
/// feed-forward block, both residual.
struct LreBlock {
    LayerNorm norm1;
    Conv2d qkv;
    Conv2d proj;
    LayerNorm norm2;
    Conv2d ff_in;
    DepthwiseConv ff_dw;
    Conv2d ff_out;
    int heads = 1;

    /// `window` must divide H and W.
    Var operator()(const Var& x, int window) const;
};

/// x + conv(lrelu(conv(x))), two 3x3 layers.
struct SreBlock {
    Conv2d conv0, conv1;
    Var operator()(const Var& x) const;
    /// Pixels an impulse can reach in each direction.
    static constexpr int kRadius = 2;
};

/// Per-pixel MLP over concat(l, s).
struct LsrFuse {
    Conv2d hidden, out;
    Var operator()(const Var& l, const Var& s) const;
};

/// concat of 9 branch features -> 1x1 merge -> stride-2 3x3 conv -> lrelu.
struct GradFuse {
    Conv2d merge, down;
    Var operator()(std::span<const Var> branches) const;
};

struct SafeBranch {
    LreBlock lre;
    SreBlock sre;
    LsrFuse fuse;
};

struct SafeLevel {
    std::array<SafeBranch, kBranches> branches;
    GradFuse grad_fuse;
};

/// f_1..f_{N+1}, highest resolution first.
struct FeaturePyramid {
    std::vector<Var> levels;
};

struct LatentCodes {
    Var z;  // (B, dim_z, 1, 1)
    Var w;  // (B, dim_w, 1, 1)
};

/// Optional hook applied to each branch input before LRE/SRE. Used to
/// inject perturbations after gradient computation.
using BranchHook = std::function<Var(int level, int branch, const Var& input)>;

struct GeneratorBlock {
    Conv2d style;  // w -> per-input-channel scales
    Var weight;    // (Cout, Cin, 3, 3)
    Var bias;      // (1, Cout, 1, 1)
    Conv2d inject; // pyramid level -> Cout, 1x1
};

/// Largest divisor of gcd(h, w) not exceeding `window`.
int effective_window(int h, int w, int window);

class StructureNet {
public:
    StructureNet(const StructureConfig& config, std::uint64_t seed);

    FeaturePyramid safe_extract(const Var& image, const BranchHook& hook = {}) const;
    LatentCodes map_to_w(const Var& deepest) const;
    Var sag_generate(const LatentCodes& codes, const FeaturePyramid& pyramid) const;
    /// I_s = generator(encoder(I)), (B, 1, H, W) in (0, 1).
    Var forward(const Var& image) const;

    const StructureConfig& config() const { return config_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    const std::vector<SafeLevel>& levels() const { return levels_; }
    const std::vector<GeneratorBlock>& generator_blocks() const { return gen_; }

private:
    StructureConfig config_;
    ParamStore params_;
    Conv2d stem_;
    std::vector<SafeLevel> levels_;
    std::vector<Conv2d> map_z_;
    std::vector<Conv2d> map_w_;
    Var const_input_;
    std::vector<GeneratorBlock> gen_;
    Conv2d head_;
};

struct DiscriminatorConfig {
    std::vector<int> channels{16, 32, 64};
    void validate() const;
};

void to_json(nlohmann::json& j, const DiscriminatorConfig& c);
void from_json(const nlohmann::json& j, DiscriminatorConfig& c);

/// Unconditional edge-map critic: stride-2 convs, global pooling, linear.
class Discriminator {
public:
    Discriminator(const DiscriminatorConfig& config, std::uint64_t seed);

    /// (B, 1, H, W) -> logits (B, 1, 1, 1).
    Var forward(const Var& edge_map) const;

    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

private:
    DiscriminatorConfig config_;
    ParamStore params_;
    std::vector<Conv2d> convs_;
    Conv2d linear_;
};

}  // namespace llie
