#include "llie/sgem.hpp"

#include <string>

#include "llie/appearance.hpp"
#include "llie/ops.hpp"

namespace llie {

namespace {

Var act(const Var& v) { return ops::leaky_relu(v, kLeakySlope); }

}  // namespace

void SgemConfig::validate() const {
    if (depth < 2) throw ConfigError("guided decoder needs at least two layers");
    if (static_cast<int>(channel_multipliers.size()) != depth) {
        throw ConfigError("guided U-Net needs one channel multiplier per level");
    }
    if (base_channels < 1 || image_channels < 1 || guide_hidden < 1) {
        throw ConfigError("guided U-Net widths must be positive");
    }
    for (int m : channel_multipliers) {
        if (m < 1) throw ConfigError("guided U-Net channel multipliers must be positive");
    }
    if (kernel_size < 1 || kernel_size % 2 == 0) throw ConfigError("guidance kernel size must be odd");
    if (!(eps > 0.0)) throw ConfigError("instance-norm eps must be positive");
}

void to_json(nlohmann::json& j, const SgemConfig& c) {
    j = {{"depth", c.depth},
         {"base_channels", c.base_channels},
         {"channel_multipliers", c.channel_multipliers},
         {"image_channels", c.image_channels},
         {"kernel_size", c.kernel_size},
         {"guide_hidden", c.guide_hidden},
         {"eps", c.eps}};
}

void from_json(const nlohmann::json& j, SgemConfig& c) {
    c.depth = j.value("depth", c.depth);
    c.base_channels = j.value("base_channels", c.base_channels);
    c.channel_multipliers = j.value("channel_multipliers", c.channel_multipliers);
    c.image_channels = j.value("image_channels", c.image_channels);
    c.kernel_size = j.value("kernel_size", c.kernel_size);
    c.guide_hidden = j.value("guide_hidden", c.guide_hidden);
    c.eps = j.value("eps", c.eps);
}

Var sgc_apply(const Var& features, const Var& kernels, int kernel_size) {
    return ops::spatially_varying_conv(features, kernels, kernel_size, kernel_size);
}

Var sgn_apply(const Var& features, const Var& alpha, const Var& gamma, double eps) {
    require_same_shape(features.value(), alpha.value(), "sgn_apply");
    require_same_shape(features.value(), gamma.value(), "sgn_apply");
    return ops::add(ops::mul(ops::instance_norm(features, eps), alpha), gamma);
}

Sgem::Sgem(const SgemConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Initializer init(seed);
    const double g = leaky_gain(kLeakySlope);
    const int D = config_.depth;
    const int taps = config_.kernel_size * config_.kernel_size;
    const int hid = config_.guide_hidden;

    for (int i = 0; i < D; ++i) {
        const int in = i == 0 ? 2 * config_.image_channels : config_.channels(i - 1);
        const int c = config_.channels(i);
        const std::string p = "enc" + std::to_string(i);
        enc_.push_back({make_conv(params_, init, p + ".conv0", {in, c, 3, 1, true, g}),
                        make_conv(params_, init, p + ".conv1", {c, c, 3, 1, true, g})});
        if (i < D - 1) {
            down_.push_back(make_conv(params_, init, "down" + std::to_string(i), {c, c, 3, 2, true, g}));
        }
    }
    for (int j = 0; j < D; ++j) {
        const int level = config_.layer_level(j);
        const int c = config_.channels(level);
        const std::string p = "dec" + std::to_string(j);
        dec_.push_back({make_conv(params_, init, p + ".conv0", {c, c, 3, 1, true, g}),
                        make_conv(params_, init, p + ".conv1", {c, c, 3})});
        Guide gd;
        gd.kernel_hidden = make_conv(params_, init, p + ".sgc.hidden", {1, hid, 3, 1, true, g});
        gd.kernel_out = make_conv(params_, init, p + ".sgc.out", {hid, c * taps, 3});
        gd.norm_hidden = make_conv(params_, init, p + ".sgn.hidden", {1, hid, 3, 1, true, g});
        gd.norm_out = make_conv(params_, init, p + ".sgn.out", {hid, 2 * c, 3, 1, true, 1.0, true});
        guide_.push_back(gd);
        if (j < D - 1) {
            const int next = config_.channels(level - 1);
            up_.push_back(make_conv(params_, init, p + ".up", {c, next, 3, 1, true, g}));
            merge_.push_back(make_conv(params_, init, p + ".merge", {2 * next, next, 1, 1, true, g}));
        }
    }
    head_ = make_conv(params_, init, "head",
                      {config_.channels(0), config_.image_channels, 1, 1, true, 1.0, true});
}

Var Sgem::sgc_synthesize(int layer, const Var& edge) const {
    const Guide& gd = guide_.at(layer);
    const int taps = config_.kernel_size * config_.kernel_size;
    return ops::softmax_channel_groups(gd.kernel_out(act(gd.kernel_hidden(edge))), taps);
}

std::pair<Var, Var> Sgem::sgn_synthesize(int layer, const Var& edge) const {
    const Guide& gd = guide_.at(layer);
    const Var out = gd.norm_out(act(gd.norm_hidden(edge)));
    const int c = out.shape().c / 2;
    return {ops::add_scalar(ops::slice_channels(out, 0, c), 1.0), ops::slice_channels(out, c, c)};
}

Var Sgem::forward(const Var& appearance, const Var& image, const Var& edge, bool use_guidance,
                  std::vector<GuidanceTrace>* trace) const {
    const Shape sa = appearance.shape();
    require_same_shape(appearance.value(), image.value(), "sgem_forward");
    if (sa.c != config_.image_channels) throw UsageError("guided U-Net got the wrong image channel count");
    require_spatial_multiple(sa, config_.size_multiple(), "sgem_forward");
    const Shape se = edge.shape();
    if (se.n != sa.n || se.c != 1 || se.h != sa.h || se.w != sa.w) {
        throw UsageError("structure map " + se.str() + " does not match image " + sa.str());
    }
    if (trace) trace->clear();

    const int D = config_.depth;
    const Var inputs[] = {appearance, image};
    Var x = ops::concat_channels(inputs);
    std::vector<Var> skips;
    for (int i = 0; i < D; ++i) {
        x = act(enc_[i].conv1(act(enc_[i].conv0(x))));
        if (i < D - 1) {
            skips.push_back(x);
            x = act(down_[i](x));
        }
    }
    for (int j = 0; j < D; ++j) {
        const Var& d = x;
        Var out = dec_[j].conv1(act(dec_[j].conv0(d)));
        if (use_guidance) {
            const Shape sd = d.shape();
            const Var guide = ops::resize_bilinear(edge, sd.h, sd.w);
            const Var kernels = sgc_synthesize(j, guide);
            const auto [alpha, gamma] = sgn_synthesize(j, guide);
            const Var guided = sgn_apply(sgc_apply(d, kernels, config_.kernel_size), alpha, gamma, config_.eps);
            out = ops::add(out, guided);
            if (trace) trace->push_back({kernels.value(), alpha.value(), gamma.value(), guided.value()});
        }
        x = act(out);
        if (j < D - 1) {
            const Var up = act(up_[j](ops::upsample_nearest2x(x)));
            const Var parts[] = {up, skips[config_.layer_level(j) - 1]};
            x = act(merge_[j](ops::concat_channels(parts)));
        }
    }
    return ops::clamp(ops::add(appearance, head_(x)), 0.0, 1.0);
}

}  // namespace llie
