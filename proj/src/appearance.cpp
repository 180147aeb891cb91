#include "llie/appearance.hpp"

#include <string>

#include "llie/ops.hpp"

namespace llie {

void UNetConfig::validate() const {
    if (depth < 2) throw ConfigError("U-Net depth must be at least 2");
    if (static_cast<int>(channel_multipliers.size()) != depth) {
        throw ConfigError("U-Net needs one channel multiplier per level");
    }
    if (base_channels < 1 || in_channels < 1 || out_channels < 1) {
        throw ConfigError("U-Net channel counts must be positive");
    }
    for (int m : channel_multipliers) {
        if (m < 1) throw ConfigError("U-Net channel multipliers must be positive");
    }
}

void to_json(nlohmann::json& j, const UNetConfig& c) {
    j = {{"depth", c.depth},
         {"base_channels", c.base_channels},
         {"channel_multipliers", c.channel_multipliers},
         {"in_channels", c.in_channels},
         {"out_channels", c.out_channels}};
}

void from_json(const nlohmann::json& j, UNetConfig& c) {
    c.depth = j.value("depth", c.depth);
    c.base_channels = j.value("base_channels", c.base_channels);
    c.channel_multipliers = j.value("channel_multipliers", c.channel_multipliers);
    c.in_channels = j.value("in_channels", c.in_channels);
    c.out_channels = j.value("out_channels", c.out_channels);
}

void require_spatial_multiple(const Shape& s, int multiple, const char* who) {
    if (s.h < 1 || s.w < 1 || s.h % multiple != 0 || s.w % multiple != 0) {
        throw UsageError(std::string(who) + ": spatial dims of " + s.str() + " must be multiples of " +
                         std::to_string(multiple));
    }
}

AppearanceNet::AppearanceNet(const UNetConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Initializer init(seed);
    const double g = leaky_gain(kLeakySlope);
    const int D = config_.depth;
    for (int i = 0; i < D; ++i) {
        const int in = i == 0 ? config_.in_channels : config_.channels(i - 1);
        const int c = config_.channels(i);
        const std::string p = "enc" + std::to_string(i);
        enc_.push_back({make_conv(params_, init, p + ".conv0", {in, c, 3, 1, true, g}),
                        make_conv(params_, init, p + ".conv1", {c, c, 3, 1, true, g})});
        if (i < D - 1) {
            down_.push_back(make_conv(params_, init, "down" + std::to_string(i), {c, c, 3, 2, true, g}));
        }
    }
    up_.resize(D - 1);
    dec_.resize(D - 1);
    for (int i = D - 2; i >= 0; --i) {
        const int c = config_.channels(i);
        const std::string s = std::to_string(i);
        up_[i] = make_conv(params_, init, "up" + s, {config_.channels(i + 1), c, 3, 1, true, g});
        dec_[i] = {make_conv(params_, init, "dec" + s + ".conv0", {2 * c, c, 3, 1, true, g}),
                   make_conv(params_, init, "dec" + s + ".conv1", {c, c, 3, 1, true, g})};
    }
    head_ = make_conv(params_, init, "head", {config_.channels(0), config_.out_channels, 1, 1, true, 1.0});
}

Var AppearanceNet::forward(const Var& image) const {
    const Shape s = image.shape();
    if (s.c != config_.in_channels) {
        throw UsageError("appearance input has " + std::to_string(s.c) + " channels, expected " +
                         std::to_string(config_.in_channels));
    }
    require_spatial_multiple(s, config_.size_multiple(), "appearance_forward");
    auto act = [](const Var& v) { return ops::leaky_relu(v, kLeakySlope); };

    const int D = config_.depth;
    std::vector<Var> skips;
    Var x = image;
    for (int i = 0; i < D; ++i) {
        x = act(enc_[i].conv1(act(enc_[i].conv0(x))));
        if (i < D - 1) {
            skips.push_back(x);
            x = act(down_[i](x));
        }
    }
    for (int i = D - 2; i >= 0; --i) {
        Var u = act(up_[i](ops::upsample_nearest2x(x)));
        const Var parts[] = {u, skips[i]};
        x = ops::concat_channels(parts);
        x = act(dec_[i].conv1(act(dec_[i].conv0(x))));
    }
    return ops::sigmoid(head_(x));
}

AppearanceNet init_appearance(const UNetConfig& config, std::uint64_t seed) {
    return AppearanceNet(config, seed);
}

}  // namespace llie
