#include <gtest/gtest.h>

#include <random>

#include "gradcheck.hpp"
#include "llie/appearance.hpp"
#include "llie/ops.hpp"
#include "oracles.hpp"

namespace llie {
namespace {

Var random_image(Shape s, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return ops::constant(oracle::random_tensor(s, rng, 0.0, 1.0));
}

TEST(Appearance, PreservesShape) {
    const AppearanceNet net({}, 1);
    EXPECT_EQ(net.forward(random_image({2, 3, 64, 64}, 2)).shape(), (Shape{2, 3, 64, 64}));
}

TEST(Appearance, ZeroHeadGivesHalfEverywhere) {
    AppearanceNet net({}, 3);
    net.head().weight.node()->value.fill(0.0);
    net.head().bias.node()->value.fill(0.0);
    const Tensor out = net.forward(random_image({1, 3, 16, 16}, 4)).value();
    for (double v : out.values()) EXPECT_EQ(v, 0.5);
}

TEST(Appearance, GradientsMatchFiniteDifferences) {
    AppearanceNet net({}, 5);
    const Var image = random_image({1, 3, 16, 16}, 6);
    testing::GradcheckOptions opt;
    opt.coords_per_tensor = 4;
    const auto res = testing::gradcheck([&] { return ops::sum(net.forward(image)); }, net.params().entries(), opt);
    EXPECT_GE(res.checked, 4 * static_cast<int>(net.params().size()) - 4);
    EXPECT_LT(res.max_rel_error, 1e-4) << res.worst;
}

TEST(Appearance, SameSeedIsBitwiseIdentical) {
    const AppearanceNet a = init_appearance({}, 11), b = init_appearance({}, 11);
    ASSERT_EQ(a.params().size(), b.params().size());
    for (std::size_t i = 0; i < a.params().size(); ++i) {
        EXPECT_EQ(a.params().entries()[i].second.value().values(), b.params().entries()[i].second.value().values());
    }
}

TEST(Appearance, DifferentSeedsDiffer) {
    const AppearanceNet a = init_appearance({}, 11), b = init_appearance({}, 12);
    bool any = false;
    for (std::size_t i = 0; i < a.params().size(); ++i) {
        any |= a.params().entries()[i].second.value().values() != b.params().entries()[i].second.value().values();
    }
    EXPECT_TRUE(any);
}

TEST(Appearance, ParameterCountMatchesLayerEnumeration) {
    UNetConfig cfg;
    cfg.depth = 3;
    cfg.base_channels = 16;
    cfg.channel_multipliers = {1, 2, 4};
    // Declared layers: per level two 3x3 convs, stride-2 3x3 downsampling
    // keeping width, 3x3 conv after each upsample, two 3x3 convs after each
    // skip concat, 1x1 head. Every layer has a bias.
    auto conv = [](std::size_t in, std::size_t out, std::size_t k) { return out * in * k * k + out; };
    const std::size_t c[] = {16, 32, 64};
    std::size_t expected = 0;
    expected += conv(3, c[0], 3) + conv(c[0], c[0], 3) + conv(c[0], c[0], 3);
    expected += conv(c[0], c[1], 3) + conv(c[1], c[1], 3) + conv(c[1], c[1], 3);
    expected += conv(c[1], c[2], 3) + conv(c[2], c[2], 3);
    expected += conv(c[2], c[1], 3) + conv(2 * c[1], c[1], 3) + conv(c[1], c[1], 3);
    expected += conv(c[1], c[0], 3) + conv(2 * c[0], c[0], 3) + conv(c[0], c[0], 3);
    expected += conv(c[0], 3, 1);
    EXPECT_EQ(expected, 141443u);
    EXPECT_EQ(init_appearance(cfg, 0).params().numel(), expected);
}

TEST(Appearance, EveryParameterReceivesGradient) {
    AppearanceNet net({}, 21);
    backward(ops::sum(net.forward(random_image({1, 3, 16, 16}, 22))));
    for (const auto& [name, v] : net.params().entries()) {
        bool nonzero = false;
        for (double g : v.grad().values()) nonzero |= g != 0.0;
        EXPECT_TRUE(nonzero) << name;
    }
}

TEST(Appearance, ForwardIsDeterministic) {
    const AppearanceNet net({}, 31);
    const Var image = random_image({1, 3, 16, 16}, 32);
    EXPECT_EQ(net.forward(image).value().values(), net.forward(image).value().values());
}

TEST(Appearance, RejectsIncompatibleDims) {
    const AppearanceNet net({}, 41);
    EXPECT_THROW(net.forward(random_image({1, 3, 18, 16}, 42)), UsageError);
    EXPECT_THROW(net.forward(random_image({1, 1, 16, 16}, 43)), UsageError);
}

TEST(Appearance, ConfigValidation) {
    UNetConfig cfg;
    cfg.channel_multipliers = {1, 2};
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = {};
    cfg.depth = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

}  // namespace
}  // namespace llie
