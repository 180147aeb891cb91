#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "llie/params.hpp"

namespace llie {

/// Encoder-decoder layout shared by the appearance network and the
/// baseline edge network.
struct UNetConfig {
    int depth = 3;
    int base_channels = 16;
    std::vector<int> channel_multipliers{1, 2, 4};
    int in_channels = 3;
    int out_channels = 3;

    void validate() const;
    int channels(int level) const { return base_channels * channel_multipliers.at(level); }
    /// Spatial dims must be divisible by this.
    int size_multiple() const { return 1 << (depth - 1); }
};

void to_json(nlohmann::json& j, const UNetConfig& c);
void from_json(const nlohmann::json& j, UNetConfig& c);

/// Plain U-Net: per level two 3x3 convs with leaky-ReLU, stride-2 conv
/// downsampling, nearest upsampling followed by a 3x3 conv, skip
/// concatenation, and a 1x1 head squashed by a sigmoid.
class AppearanceNet {
public:
    AppearanceNet(const UNetConfig& config, std::uint64_t seed);

    /// I_a = sigmoid(head(U-Net(I))), same shape as I except for channels.
    Var forward(const Var& image) const;

    const UNetConfig& config() const { return config_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const Conv2d& head() const { return head_; }

private:
    struct Level {
        Conv2d conv0, conv1;
    };

    UNetConfig config_;
    ParamStore params_;
    std::vector<Level> enc_;
    std::vector<Conv2d> down_;
    std::vector<Conv2d> up_;
    std::vector<Level> dec_;
    Conv2d head_;
};

AppearanceNet init_appearance(const UNetConfig& config, std::uint64_t seed);

/// Throws UsageError unless H and W are positive multiples of `multiple`.
void require_spatial_multiple(const Shape& s, int multiple, const char* who);

}  // namespace llie
