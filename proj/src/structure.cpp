#include "llie/structure.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "llie/ops.hpp"

namespace llie {

namespace {

Var act(const Var& v) { return ops::leaky_relu(v, kLeakySlope); }

std::string level_name(int level, int branch) {
    return "safe.l" + std::to_string(level) + ".b" + std::to_string(branch);
}

}  // namespace

void StructureConfig::validate() const {
    if (num_levels < 1) throw ConfigError("structure encoder needs at least one level");
    if (static_cast<int>(channels.size()) != num_levels) {
        throw ConfigError("structure encoder needs one channel count per level");
    }
    if (window_size < 1 || heads < 1 || mlp_ratio <= 0.0) {
        throw ConfigError("window_size, heads and mlp_ratio must be positive");
    }
    for (int c : channels) {
        if (c < 1 || c % heads != 0) {
            throw ConfigError("every level width must be a positive multiple of the head count");
        }
    }
    if (in_channels < 1 || dim_z < 1 || dim_w < 1 || mapping_layers < 1) {
        throw ConfigError("structure latent sizes must be positive");
    }
    if (!generator_channels.empty() && static_cast<int>(generator_channels.size()) != num_levels + 1) {
        throw ConfigError("generator needs one width per pyramid level");
    }
    for (int c : generator_channels) {
        if (c < 1) throw ConfigError("generator widths must be positive");
    }
}

int StructureConfig::level_channels(int level) const {
    if (level < 0 || level > num_levels) throw UsageError("pyramid level out of range");
    return level < num_levels ? channels[level] : channels[num_levels - 1];
}

std::vector<int> StructureConfig::resolved_generator_channels() const {
    if (!generator_channels.empty()) return generator_channels;
    std::vector<int> out;
    for (int level = num_levels; level >= 0; --level) out.push_back(level_channels(level));
    return out;
}

void to_json(nlohmann::json& j, const StructureConfig& c) {
    j = {{"in_channels", c.in_channels},       {"num_levels", c.num_levels},
         {"channels", c.channels},             {"window_size", c.window_size},
         {"heads", c.heads},                   {"mlp_ratio", c.mlp_ratio},
         {"dim_z", c.dim_z},                   {"dim_w", c.dim_w},
         {"mapping_layers", c.mapping_layers}, {"generator_channels", c.generator_channels}};
}

void from_json(const nlohmann::json& j, StructureConfig& c) {
    c.in_channels = j.value("in_channels", c.in_channels);
    c.num_levels = j.value("num_levels", c.num_levels);
    c.channels = j.value("channels", c.channels);
    c.window_size = j.value("window_size", c.window_size);
    c.heads = j.value("heads", c.heads);
    c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
    c.dim_z = j.value("dim_z", c.dim_z);
    c.dim_w = j.value("dim_w", c.dim_w);
    c.mapping_layers = j.value("mapping_layers", c.mapping_layers);
    c.generator_channels = j.value("generator_channels", c.generator_channels);
}

int effective_window(int h, int w, int window) {
    const int g = std::gcd(h, w);
    for (int s = std::min(window, g); s > 1; --s) {
        if (g % s == 0) return s;
    }
    return 1;
}

Var LreBlock::operator()(const Var& x, int window) const {
    const Shape s = x.shape();
    if (window < 1 || s.h % window != 0 || s.w % window != 0) {
        throw UsageError("attention window " + std::to_string(window) + " does not tile " + s.str());
    }
    const Var qkv_out = qkv(norm1(x));
    const Var q = ops::slice_channels(qkv_out, 0, s.c);
    const Var k = ops::slice_channels(qkv_out, s.c, s.c);
    const Var v = ops::slice_channels(qkv_out, 2 * s.c, s.c);
    const Var y = ops::add(x, proj(ops::window_attention(q, k, v, heads, window)));
    const Var hidden = ops::gelu(ff_dw(ops::gelu(ff_in(norm2(y)))));
    return ops::add(y, ff_out(hidden));
}

Var SreBlock::operator()(const Var& x) const { return ops::add(x, conv1(act(conv0(x)))); }

Var LsrFuse::operator()(const Var& l, const Var& s) const {
    require_same_shape(l.value(), s.value(), "lsr_fuse");
    const Var parts[] = {l, s};
    return out(act(hidden(ops::concat_channels(parts))));
}

Var GradFuse::operator()(std::span<const Var> branches) const {
    if (static_cast<int>(branches.size()) != kBranches) {
        throw UsageError("grad_fuse expects 9 branch features, got " + std::to_string(branches.size()));
    }
    for (const Var& b : branches) require_same_shape(b.value(), branches[0].value(), "grad_fuse");
    return act(down(merge(ops::concat_channels(branches))));
}

StructureNet::StructureNet(const StructureConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Initializer init(seed);
    const double g = leaky_gain(kLeakySlope);
    const int N = config_.num_levels;

    stem_ = make_conv(params_, init, "safe.stem", {config_.in_channels, config_.level_channels(0), 3, 1, true, 1.0});
    stem_.pad = 0;  // replicate padding is applied explicitly

    for (int i = 0; i < N; ++i) {
        const int c = config_.level_channels(i);
        const int hidden = std::max(1, static_cast<int>(std::lround(c * config_.mlp_ratio)));
        SafeLevel level;
        for (int b = 0; b < kBranches; ++b) {
            const std::string p = level_name(i, b);
            SafeBranch& br = level.branches[b];
            br.lre.norm1 = make_layer_norm(params_, p + ".lre.norm1", c);
            br.lre.qkv = make_conv(params_, init, p + ".lre.qkv", {c, 3 * c, 1});
            br.lre.proj = make_conv(params_, init, p + ".lre.proj", {c, c, 1});
            br.lre.norm2 = make_layer_norm(params_, p + ".lre.norm2", c);
            br.lre.ff_in = make_conv(params_, init, p + ".lre.ff_in", {c, hidden, 1});
            br.lre.ff_dw = make_depthwise(params_, init, p + ".lre.ff_dw", hidden, 3);
            br.lre.ff_out = make_conv(params_, init, p + ".lre.ff_out", {hidden, c, 1});
            br.lre.heads = config_.heads;
            br.sre.conv0 = make_conv(params_, init, p + ".sre.conv0", {c, c, 3, 1, true, g});
            br.sre.conv1 = make_conv(params_, init, p + ".sre.conv1", {c, c, 3});
            br.fuse.hidden = make_conv(params_, init, p + ".fuse.hidden", {2 * c, 2 * c, 1, 1, true, g});
            br.fuse.out = make_conv(params_, init, p + ".fuse.out", {2 * c, c, 1});
        }
        const std::string p = "safe.l" + std::to_string(i) + ".grad_fuse";
        level.grad_fuse.merge = make_conv(params_, init, p + ".merge", {kBranches * c, c, 1});
        level.grad_fuse.down =
            make_conv(params_, init, p + ".down", {c, config_.level_channels(i + 1), 3, 2, true, g});
        levels_.push_back(std::move(level));
    }

    int width = config_.level_channels(N);
    for (int l = 0; l < config_.mapping_layers; ++l) {
        map_z_.push_back(make_conv(params_, init, "map_z." + std::to_string(l),
                                   {width, config_.dim_z, 1, 1, true, l + 1 < config_.mapping_layers ? g : 1.0}));
        width = config_.dim_z;
    }
    for (int l = 0; l < config_.mapping_layers; ++l) {
        map_w_.push_back(make_conv(params_, init, "map_w." + std::to_string(l), {width, config_.dim_w, 1, 1, true, g}));
        width = config_.dim_w;
    }

    const std::vector<int> gc = config_.resolved_generator_channels();
    const_input_ = params_.add("gen.const", init.normal({1, gc[0], 1, 1}, 1, 1.0));
    for (int k = 0; k <= N; ++k) {
        const int in = k == 0 ? gc[0] : gc[k - 1];
        const int out = gc[k];
        const std::string p = "gen.b" + std::to_string(k);
        GeneratorBlock block;
        block.style = make_conv(params_, init, p + ".style", {config_.dim_w, in, 1});
        Var style_bias = block.style.bias;
        style_bias.mutable_value().fill(1.0);
        block.weight = params_.add(p + ".weight", init.normal({out, in, 3, 3}, in * 9, 1.0));
        block.bias = params_.add(p + ".bias", Tensor({1, out, 1, 1}));
        block.inject = make_conv(params_, init, p + ".inject", {config_.level_channels(N - k), out, 1});
        gen_.push_back(std::move(block));
    }
    head_ = make_conv(params_, init, "gen.head", {gc[N], 1, 1});
}

FeaturePyramid StructureNet::safe_extract(const Var& image, const BranchHook& hook) const {
    const Shape s = image.shape();
    if (s.c != config_.in_channels) {
        throw UsageError("structure input has " + std::to_string(s.c) + " channels, expected " +
                         std::to_string(config_.in_channels));
    }
    if (s.h % config_.size_multiple() != 0 || s.w % config_.size_multiple() != 0) {
        throw UsageError("structure input " + s.str() + " must have dims divisible by " +
                         std::to_string(config_.size_multiple()));
    }
    FeaturePyramid pyr;
    pyr.levels.push_back(stem_(ops::pad_replicate(image, 1)));
    for (int i = 0; i < config_.num_levels; ++i) {
        const Var& f = pyr.levels.back();
        const int window = effective_window(f.shape().h, f.shape().w, config_.window_size);
        std::array<Var, kBranches> fused;
        for (int b = 0; b < kBranches; ++b) {
            Var input = b == 0 ? f : ops::directional_gradient(f, ops::kDirections[b - 1]);
            if (hook) input = hook(i, b, input);
            const SafeBranch& br = levels_[i].branches[b];
            fused[b] = br.fuse(br.lre(input, window), br.sre(input));
        }
        pyr.levels.push_back(levels_[i].grad_fuse(fused));
    }
    return pyr;
}

LatentCodes StructureNet::map_to_w(const Var& deepest) const {
    if (deepest.shape().c != config_.level_channels(config_.num_levels)) {
        throw UsageError("mapping input has the wrong channel count");
    }
    LatentCodes codes;
    Var x = ops::global_avg_pool(deepest);
    for (std::size_t l = 0; l < map_z_.size(); ++l) {
        x = map_z_[l](x);
        if (l + 1 < map_z_.size()) x = act(x);
    }
    codes.z = x;
    for (const Conv2d& layer : map_w_) x = act(layer(x));
    codes.w = x;
    return codes;
}

Var StructureNet::sag_generate(const LatentCodes& codes, const FeaturePyramid& pyramid) const {
    const int N = config_.num_levels;
    if (static_cast<int>(pyramid.levels.size()) != N + 1) {
        throw UsageError("generator needs " + std::to_string(N + 1) + " pyramid levels");
    }
    const Shape low = pyramid.levels[N].shape();
    for (int level = 0; level <= N; ++level) {
        const Shape s = pyramid.levels[level].shape();
        const int scale = 1 << (N - level);
        if (s.n != low.n || s.h != low.h * scale || s.w != low.w * scale) {
            throw UsageError("pyramid level " + std::to_string(level) + " has shape " + s.str() +
                             ", which does not match the generator resolution");
        }
    }
    if (codes.w.shape().n != low.n) throw UsageError("latent batch does not match pyramid batch");

    Var x = ops::expand(const_input_, {low.n, const_input_.shape().c, low.h, low.w});
    for (int k = 0; k <= N; ++k) {
        const GeneratorBlock& b = gen_[k];
        if (k > 0) x = ops::upsample_nearest2x(x);
        const Var style = b.style(codes.w);
        Var y = ops::conv2d(ops::mul(x, style), b.weight, Var(), 1, 1);
        const Var energy = ops::conv2d(ops::square(style), ops::sum_hw(ops::square(b.weight)), Var(), 1, 0);
        y = ops::mul(y, ops::rsqrt(ops::add_scalar(energy, 1e-8)));
        y = ops::add(y, b.inject(pyramid.levels[N - k]));
        x = act(ops::add(y, b.bias));
    }
    return ops::sigmoid(head_(x));
}

Var StructureNet::forward(const Var& image) const {
    const FeaturePyramid pyr = safe_extract(image);
    return sag_generate(map_to_w(pyr.levels.back()), pyr);
}

void DiscriminatorConfig::validate() const {
    if (channels.empty()) throw ConfigError("discriminator needs at least one layer");
    for (int c : channels) {
        if (c < 1) throw ConfigError("discriminator widths must be positive");
    }
}

void to_json(nlohmann::json& j, const DiscriminatorConfig& c) { j = {{"channels", c.channels}}; }

void from_json(const nlohmann::json& j, DiscriminatorConfig& c) { c.channels = j.value("channels", c.channels); }

Discriminator::Discriminator(const DiscriminatorConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Initializer init(seed);
    int in = 1;
    for (std::size_t i = 0; i < config_.channels.size(); ++i) {
        convs_.push_back(make_conv(params_, init, "disc.conv" + std::to_string(i),
                                   {in, config_.channels[i], 3, 2, true, leaky_gain(kLeakySlope)}));
        in = config_.channels[i];
    }
    linear_ = make_conv(params_, init, "disc.linear", {in, 1, 1});
}

Var Discriminator::forward(const Var& edge_map) const {
    if (edge_map.shape().c != 1) throw UsageError("discriminator expects a 1-channel edge map");
    Var x = edge_map;
    for (const Conv2d& c : convs_) x = act(c(x));
    return linear_(ops::global_avg_pool(x));
}

}  // namespace llie
