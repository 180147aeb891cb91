#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "llie/imaging.hpp"
#include "llie/ops.hpp"
#include "llie/structure.hpp"
#include "oracles.hpp"

namespace llie {
namespace {

Var random_var(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    return ops::constant(oracle::random_tensor(s, rng, lo, hi));
}

void fill(Var v, double value) { v.mutable_value().fill(value); }

StructureConfig small_config() {
    StructureConfig cfg;
    cfg.num_levels = 2;
    cfg.channels = {8, 16};
    cfg.window_size = 4;
    cfg.dim_z = 16;
    cfg.dim_w = 16;
    return cfg;
}

std::vector<std::pair<std::string, Var>> params_with_prefix(const ParamStore& store, const std::string& prefix) {
    std::vector<std::pair<std::string, Var>> out;
    for (const auto& e : store.entries()) {
        if (e.first.rfind(prefix, 0) == 0) out.push_back(e);
    }
    return out;
}

/// Perturbs every LayerNorm affine so tests do not run at the trivial
/// gamma = 1, beta = 0 point.
void perturb_norms(LreBlock& b, std::mt19937_64& rng) {
    for (Var v : {b.norm1.gamma, b.norm1.beta, b.norm2.gamma, b.norm2.beta}) {
        for (double& x : v.mutable_value().values()) x += std::uniform_real_distribution<double>(-0.3, 0.3)(rng);
    }
}

// LRE ----------------------------------------------------------------------------

TEST(Lre, SingleWindowEqualsDenseAttentionBlock) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 6; ++trial) {
        StructureConfig cfg = small_config();
        StructureNet net(cfg, 100 + trial);
        LreBlock block = net.levels()[trial % 2].branches[trial % kBranches].lre;
        perturb_norms(block, rng);
        const int c = cfg.channels[trial % 2];
        const int side = 2 + trial % 3;
        const Tensor x = oracle::random_tensor({1 + trial % 2, c, side, side}, rng);
        const Tensor got = block(ops::constant(x), side).value();
        EXPECT_LT(oracle::max_abs_diff(got, oracle::lre_block(block, x)), 1e-5);
    }
}

TEST(Lre, ZeroOutputProjectionsGiveIdentity) {
    std::mt19937_64 rng(2);
    StructureNet net(small_config(), 3);
    const LreBlock& block = net.levels()[0].branches[0].lre;
    fill(block.proj.weight, 0.0);
    fill(block.proj.bias, 0.0);
    fill(block.ff_out.weight, 0.0);
    fill(block.ff_out.bias, 0.0);
    const Var x = random_var({2, 8, 8, 8}, rng);
    EXPECT_EQ(block(x, 4).value().values(), x.value().values());
}

TEST(Lre, AttentionWeightsAreRowStochastic) {
    std::mt19937_64 rng(3);
    StructureNet net(small_config(), 4);
    const LreBlock& block = net.levels()[0].branches[2].lre;
    const Var x = random_var({1, 8, 8, 8}, rng);
    const Tensor qkv = block.qkv(block.norm1(x)).value();
    const Tensor q = ops::slice_channels(ops::constant(qkv), 0, 8).value();
    const Tensor k = ops::slice_channels(ops::constant(qkv), 8, 8).value();
    const Tensor p = ops::window_attention_weights(q, k, block.heads, 4);
    for (std::size_t row = 0; row < p.size(); row += 16) {
        double s = 0.0;
        for (int j = 0; j < 16; ++j) s += p[row + j];
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Lre, WindowMustTileInput) {
    std::mt19937_64 rng(4);
    StructureNet net(small_config(), 5);
    EXPECT_THROW(net.levels()[0].branches[0].lre(random_var({1, 8, 6, 6}, rng), 4), UsageError);
}

TEST(Lre, EffectiveWindowIsLargestDivisor) {
    EXPECT_EQ(effective_window(16, 16, 8), 8);
    EXPECT_EQ(effective_window(12, 12, 8), 6);
    EXPECT_EQ(effective_window(10, 20, 8), 5);
    EXPECT_EQ(effective_window(7, 7, 8), 7);
    EXPECT_EQ(effective_window(4, 4, 8), 4);
    EXPECT_EQ(effective_window(14, 21, 8), 7);
}

// SRE ----------------------------------------------------------------------------

TEST(Sre, ZeroWeightsGiveIdentity) {
    std::mt19937_64 rng(5);
    StructureNet net(small_config(), 6);
    const SreBlock& block = net.levels()[0].branches[1].sre;
    for (Var v : {block.conv0.weight, block.conv0.bias, block.conv1.weight, block.conv1.bias}) fill(v, 0.0);
    const Var x = random_var({1, 8, 16, 16}, rng);
    EXPECT_EQ(block(x).value().values(), x.value().values());
}

TEST(Sre, ImpulseResponseStaysInReceptiveField) {
    std::mt19937_64 rng(6);
    StructureNet net(small_config(), 7);
    const SreBlock& block = net.levels()[0].branches[1].sre;
    fill(block.conv0.bias, 0.0);
    fill(block.conv1.bias, 0.0);
    Tensor x({1, 8, 15, 15});
    const int cy = 7, cx = 7;
    for (int c = 0; c < 8; ++c) x.at(0, c, cy, cx) = 1.0 + c;
    const Tensor y = block(ops::constant(x)).value();
    bool reached_edge = false;
    for (int c = 0; c < 8; ++c) {
        for (int yy = 0; yy < 15; ++yy) {
            for (int xx = 0; xx < 15; ++xx) {
                const int dist = std::max(std::abs(yy - cy), std::abs(xx - cx));
                if (dist > SreBlock::kRadius) {
                    EXPECT_EQ(y.at(0, c, yy, xx), 0.0) << yy << "," << xx;
                } else if (dist == SreBlock::kRadius && y.at(0, c, yy, xx) != 0.0) {
                    reached_edge = true;
                }
            }
        }
    }
    EXPECT_TRUE(reached_edge);
}

TEST(Sre, PreservesShape) {
    std::mt19937_64 rng(7);
    StructureNet net(small_config(), 8);
    EXPECT_EQ(net.levels()[0].branches[0].sre(random_var({1, 8, 16, 16}, rng)).shape(), (Shape{1, 8, 16, 16}));
}

// LSR-F ---------------------------------------------------------------------------

TEST(LsrFuse, ProjectionOntoFirstInput) {
    std::mt19937_64 rng(8);
    StructureNet net(small_config(), 9);
    const LsrFuse& f = net.levels()[0].branches[0].fuse;
    const int C = 8;
    // hidden = (l, -l); lrelu(a) - lrelu(-a) = (1 + slope) * a.
    Tensor& hw = Var(f.hidden.weight).mutable_value();
    hw.fill(0.0);
    for (int c = 0; c < C; ++c) {
        hw.at(c, c, 0, 0) = 1.0;
        hw.at(C + c, c, 0, 0) = -1.0;
    }
    fill(f.hidden.bias, 0.0);
    Tensor& ow = Var(f.out.weight).mutable_value();
    ow.fill(0.0);
    for (int c = 0; c < C; ++c) {
        ow.at(c, c, 0, 0) = 1.0 / 1.2;
        ow.at(c, C + c, 0, 0) = -1.0 / 1.2;
    }
    fill(f.out.bias, 0.0);
    const Var l = random_var({2, C, 5, 5}, rng), s = random_var({2, C, 5, 5}, rng);
    EXPECT_LT(oracle::max_abs_diff(f(l, s).value(), l.value()), 1e-14);
}

TEST(LsrFuse, OrderSensitive) {
    std::mt19937_64 rng(9);
    StructureNet net(small_config(), 10);
    const LsrFuse& f = net.levels()[0].branches[0].fuse;
    const Var l = random_var({1, 8, 4, 4}, rng), s = random_var({1, 8, 4, 4}, rng);
    EXPECT_GT(oracle::max_abs_diff(f(l, s).value(), f(s, l).value()), 1e-3);
}

TEST(LsrFuse, MatchesPerPixelMlpOracle) {
    std::mt19937_64 rng(10);
    StructureNet net(small_config(), 11);
    for (int trial = 0; trial < 20; ++trial) {
        const LsrFuse& f = net.levels()[trial % 2].branches[trial % kBranches].fuse;
        const int C = f.out.out_channels();
        const Tensor l = oracle::random_tensor({1, C, 3, 4}, rng), s = oracle::random_tensor({1, C, 3, 4}, rng);
        const Tensor hidden = oracle::leaky(
            oracle::conv2d(oracle::concat({l, s}), f.hidden.weight.value(), f.hidden.bias.value(), 1, 0), 0.2);
        const Tensor expected = oracle::conv2d(hidden, f.out.weight.value(), f.out.bias.value(), 1, 0);
        EXPECT_LT(oracle::max_abs_diff(f(ops::constant(l), ops::constant(s)).value(), expected), 1e-6);
    }
}

// Grad-F --------------------------------------------------------------------------

TEST(GradFuse, ContentPassThroughIgnoresDirections) {
    std::mt19937_64 rng(11);
    StructureNet net(small_config(), 12);
    const GradFuse& g = net.levels()[0].grad_fuse;
    const int C = 8;
    Tensor& mw = Var(g.merge.weight).mutable_value();
    for (int o = 0; o < mw.n(); ++o) {
        for (int c = C; c < mw.c(); ++c) mw.at(o, c, 0, 0) = 0.0;
    }
    std::vector<Var> zeros(kBranches), noisy(kBranches);
    zeros[0] = noisy[0] = random_var({1, C, 8, 8}, rng);
    for (int b = 1; b < kBranches; ++b) {
        zeros[b] = ops::constant(Tensor({1, C, 8, 8}));
        noisy[b] = random_var({1, C, 8, 8}, rng);
    }
    EXPECT_EQ(g(zeros).value().values(), g(noisy).value().values());
}

TEST(GradFuse, HalvesSpatialDims) {
    std::mt19937_64 rng(12);
    StructureNet net(small_config(), 13);
    std::vector<Var> in(kBranches);
    for (Var& v : in) v = random_var({2, 8, 8, 6}, rng);
    EXPECT_EQ(net.levels()[0].grad_fuse(in).shape(), (Shape{2, 16, 4, 3}));
}

TEST(GradFuse, MatchesConcatConvOracle) {
    std::mt19937_64 rng(13);
    StructureNet net(small_config(), 14);
    for (int trial = 0; trial < 20; ++trial) {
        const int level = trial % 2;
        const GradFuse& g = net.levels()[level].grad_fuse;
        const int C = small_config().channels[level];
        std::vector<Tensor> parts;
        std::vector<Var> in;
        for (int b = 0; b < kBranches; ++b) {
            parts.push_back(oracle::random_tensor({1, C, 4, 4}, rng));
            in.push_back(ops::constant(parts.back()));
        }
        const Tensor merged = oracle::conv2d(oracle::concat(parts), g.merge.weight.value(), g.merge.bias.value(), 1, 0);
        const Tensor expected =
            oracle::leaky(oracle::conv2d(merged, g.down.weight.value(), g.down.bias.value(), 2, 1), 0.2);
        EXPECT_LT(oracle::max_abs_diff(g(in).value(), expected), 1e-6);
    }
}

TEST(GradFuse, RequiresNineBranches) {
    std::mt19937_64 rng(14);
    StructureNet net(small_config(), 15);
    std::vector<Var> in(3, random_var({1, 8, 4, 4}, rng));
    EXPECT_THROW(net.levels()[0].grad_fuse(in), UsageError);
}

// SAFE -------------------------------------------------------------------------------

TEST(Safe, PyramidShapes) {
    std::mt19937_64 rng(15);
    StructureNet net({}, 16);
    const FeaturePyramid p = net.safe_extract(random_var({1, 3, 64, 64}, rng, 0, 1));
    ASSERT_EQ(p.levels.size(), 4u);
    const Shape expected[] = {{1, 16, 64, 64}, {1, 32, 32, 32}, {1, 64, 16, 16}, {1, 64, 8, 8}};
    for (int i = 0; i < 4; ++i) EXPECT_EQ(p.levels[i].shape(), expected[i]);
}

TEST(Safe, ConstantImageGivesZeroGradientBranches) {
    StructureNet net(small_config(), 17);
    int seen = 0;
    net.safe_extract(ops::constant(Tensor({1, 3, 16, 16}, 0.37)), [&](int level, int branch, const Var& in) {
        if (level == 0 && branch > 0) {
            ++seen;
            for (double v : in.value().values()) EXPECT_EQ(v, 0.0);
        }
        return in;
    });
    EXPECT_EQ(seen, 8);
}

TEST(Safe, GradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(18);
    StructureNet net(small_config(), 19);
    const Var image = random_var({1, 3, 16, 16}, rng, 0, 1);
    const auto leaves = params_with_prefix(net.params(), "safe.");
    std::vector<Var> weights;
    {
        NoGradGuard no_grad;
        const FeaturePyramid p = net.safe_extract(image);
        for (const Var& level : p.levels) weights.push_back(random_var(level.shape(), rng));
    }
    auto loss = [&] {
        const FeaturePyramid p = net.safe_extract(image);
        Var total = ops::sum(ops::mul(p.levels[0], weights[0]));
        for (std::size_t i = 1; i < p.levels.size(); ++i) total = ops::add(total, ops::sum(ops::mul(p.levels[i], weights[i])));
        return total;
    };
    testing::GradcheckOptions opt;
    opt.coords_per_tensor = 1;
    // Stacked attention has large third derivatives; at 1e-3 the central
    // difference truncation error alone reaches 1e-4 relative.
    opt.step = 1e-4;
    const auto res = testing::gradcheck(loss, leaves, opt);
    EXPECT_GE(res.checked, static_cast<int>(leaves.size()) * 9 / 10);
    EXPECT_LT(res.max_rel_error, 1e-4) << res.worst;
}

TEST(Safe, LevelsDoNotSeeDeeperPerturbations) {
    std::mt19937_64 rng(20);
    StructureNet net(small_config(), 21);
    const Var image = random_var({1, 3, 16, 16}, rng, 0, 1);
    const FeaturePyramid base = net.safe_extract(image);
    const Tensor noise = oracle::random_tensor({1, 16, 8, 8}, rng);
    const FeaturePyramid hit = net.safe_extract(image, [&](int level, int branch, const Var& in) {
        return level == 1 && branch == 0 ? ops::add(in, ops::constant(noise)) : in;
    });
    EXPECT_EQ(hit.levels[0].value().values(), base.levels[0].value().values());
    EXPECT_EQ(hit.levels[1].value().values(), base.levels[1].value().values());
    EXPECT_NE(hit.levels[2].value().values(), base.levels[2].value().values());
}

TEST(Safe, FiniteAtInitialization) {
    std::mt19937_64 rng(22);
    StructureNet net({}, 23);
    const FeaturePyramid p = net.safe_extract(random_var({1, 3, 32, 32}, rng, 0, 1));
    for (const Var& level : p.levels) {
        EXPECT_TRUE(level.value().all_finite());
    }
    EXPECT_TRUE(net.forward(random_var({1, 3, 32, 32}, rng, 0, 1)).value().all_finite());
}

TEST(Safe, BranchIsolation) {
    std::mt19937_64 rng(24);
    StructureNet net(small_config(), 25);
    const int level = 0, branch = 3;
    const LsrFuse& f = net.levels()[level].branches[branch].fuse;
    fill(f.out.weight, 0.0);
    fill(f.out.bias, 0.0);
    const Var image = random_var({1, 3, 16, 16}, rng, 0, 1);
    const Tensor noise = oracle::random_tensor({1, 8, 16, 16}, rng);
    auto perturbed = [&](int target) {
        return [&, target](int l, int b, const Var& in) {
            return l == level && b == target ? ops::add(in, ops::constant(noise)) : in;
        };
    };
    auto edges = [&](const BranchHook& hook) {
        const FeaturePyramid p = net.safe_extract(image, hook);
        return net.sag_generate(net.map_to_w(p.levels.back()), p).value();
    };
    const Tensor base = edges({});
    EXPECT_EQ(edges(perturbed(branch)).values(), base.values());
    EXPECT_NE(edges(perturbed(branch + 1)).values(), base.values());
}

// Mapping --------------------------------------------------------------------------

TEST(Mapping, PoolingOfConstantMapIsExact) {
    std::mt19937_64 rng(26);
    StructureNet net(small_config(), 27);
    Tensor wide({1, 16, 6, 10}), point({1, 16, 1, 1});
    for (int c = 0; c < 16; ++c) {
        const double v = std::uniform_real_distribution<double>(-1, 1)(rng);
        point[c] = v;
        for (double& x : wide.channel(0, c)) x = v;
    }
    const Tensor pooled = ops::global_avg_pool(ops::constant(wide)).value();
    EXPECT_EQ(pooled.values(), point.values());
    const LatentCodes a = net.map_to_w(ops::constant(wide)), b = net.map_to_w(ops::constant(point));
    EXPECT_EQ(a.z.value().values(), b.z.value().values());
    EXPECT_EQ(a.w.value().values(), b.w.value().values());
}

TEST(Mapping, CodeShapesIndependentOfInputSize) {
    std::mt19937_64 rng(28);
    StructureNet net(small_config(), 29);
    for (int side : {1, 3, 8}) {
        const LatentCodes codes = net.map_to_w(random_var({2, 16, side, side + 1}, rng));
        EXPECT_EQ(codes.z.shape(), (Shape{2, 16, 1, 1}));
        EXPECT_EQ(codes.w.shape(), (Shape{2, 16, 1, 1}));
    }
}

TEST(Mapping, PoolingMatchesScalarMean) {
    std::mt19937_64 rng(30);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor f = oracle::random_tensor({2, 3, 2 + trial % 5, 3 + trial % 4}, rng);
        const Tensor pooled = ops::global_avg_pool(ops::constant(f)).value();
        for (int n = 0; n < 2; ++n) {
            for (int c = 0; c < 3; ++c) {
                double s = 0.0;
                for (int y = 0; y < f.h(); ++y) {
                    for (int x = 0; x < f.w(); ++x) s += f.at(n, c, y, x);
                }
                EXPECT_NEAR(pooled.at(n, c, 0, 0), s / (f.h() * f.w()), 1e-7);
            }
        }
    }
}

// Generator -----------------------------------------------------------------------

TEST(Sag, ShapeAndRange) {
    std::mt19937_64 rng(31);
    StructureNet net(small_config(), 32);
    const Var image = random_var({2, 3, 16, 12}, rng, 0, 1);
    const Tensor out = net.forward(image).value();
    EXPECT_EQ(out.shape(), (Shape{2, 1, 16, 12}));
    for (double v : out.values()) {
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
    }
}

TEST(Sag, ZeroInjectionIgnoresPyramid) {
    std::mt19937_64 rng(33);
    StructureNet net(small_config(), 34);
    for (const GeneratorBlock& b : net.generator_blocks()) {
        fill(b.inject.weight, 0.0);
        fill(b.inject.bias, 0.0);
    }
    const FeaturePyramid p = net.safe_extract(random_var({1, 3, 16, 16}, rng, 0, 1));
    const LatentCodes codes = net.map_to_w(p.levels.back());
    FeaturePyramid q;
    for (const Var& l : p.levels) q.levels.push_back(ops::add(l, random_var(l.shape(), rng)));
    EXPECT_EQ(net.sag_generate(codes, p).value().values(), net.sag_generate(codes, q).value().values());
}

TEST(Sag, InjectionMatters) {
    std::mt19937_64 rng(35);
    StructureNet net(small_config(), 36);
    const FeaturePyramid p = net.safe_extract(random_var({1, 3, 16, 16}, rng, 0, 1));
    const LatentCodes codes = net.map_to_w(p.levels.back());
    FeaturePyramid q;
    for (const Var& l : p.levels) q.levels.push_back(ops::add(l, random_var(l.shape(), rng)));
    EXPECT_NE(net.sag_generate(codes, p).value().values(), net.sag_generate(codes, q).value().values());
}

// Composed -------------------------------------------------------------------------

TEST(Structure, DeterministicAndShaped) {
    std::mt19937_64 rng(37);
    StructureNet net({}, 38);
    const Var image = random_var({1, 3, 64, 64}, rng, 0, 1);
    const Tensor a = net.forward(image).value();
    EXPECT_EQ(a.shape(), (Shape{1, 1, 64, 64}));
    EXPECT_EQ(a.values(), net.forward(image).value().values());
}

TEST(Structure, EndToEndGradientSpotCheck) {
    std::mt19937_64 rng(39);
    StructureNet net(small_config(), 40);
    const Var image = random_var({1, 3, 16, 16}, rng, 0, 1);
    const Var weights = random_var({1, 1, 16, 16}, rng);
    std::vector<std::pair<std::string, Var>> leaves;
    const auto& all = net.params().entries();
    std::vector<std::size_t> order(all.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    for (int i = 0; i < 10; ++i) leaves.push_back(all[order[i]]);
    testing::GradcheckOptions opt;
    opt.coords_per_tensor = 1;
    const auto res =
        testing::gradcheck([&] { return ops::sum(ops::mul(net.forward(image), weights)); }, leaves, opt);
    EXPECT_GE(res.checked, 9);
    EXPECT_LT(res.max_rel_error, 1e-3) << res.worst;
}

TEST(Structure, RejectsIncompatibleDims) {
    std::mt19937_64 rng(41);
    StructureNet net(small_config(), 42);
    EXPECT_THROW(net.forward(random_var({1, 3, 14, 16}, rng, 0, 1)), UsageError);
}

TEST(Structure, ConfigValidation) {
    StructureConfig cfg;
    cfg.channels = {16, 32};
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = {};
    cfg.heads = 3;  // 16 channels are not divisible by 3 heads
    EXPECT_THROW(cfg.validate(), ConfigError);
    EXPECT_EQ(StructureConfig{}.resolved_generator_channels(), (std::vector<int>{64, 64, 32, 16}));
}

// Discriminator --------------------------------------------------------------------

TEST(Discriminator, OneLogitPerImage) {
    std::mt19937_64 rng(43);
    Discriminator d({}, 44);
    EXPECT_EQ(d.forward(random_var({4, 1, 32, 32}, rng, 0, 1)).shape(), (Shape{4, 1, 1, 1}));
}

TEST(Discriminator, ZeroParamsGiveZeroLogits) {
    std::mt19937_64 rng(45);
    Discriminator d({}, 46);
    for (const auto& e : d.params().entries()) fill(e.second, 0.0);
    const Tensor logits = d.forward(random_var({3, 1, 16, 16}, rng, 0, 1)).value();
    for (double v : logits.values()) EXPECT_EQ(v, 0.0);
}

TEST(Discriminator, InputGradientNonzeroAndCorrect) {
    std::mt19937_64 rng(47);
    Discriminator d({}, 48);
    Var edge(oracle::random_tensor({2, 1, 16, 16}, rng, 0, 1), true);
    auto loss = [&] { return ops::mean(d.forward(edge)); };
    backward(loss());
    double norm = 0.0;
    for (double g : edge.grad().values()) norm += g * g;
    EXPECT_GT(norm, 0.0);
    edge.zero_grad();
    testing::GradcheckOptions opt;
    opt.coords_per_tensor = 20;
    const auto res = testing::gradcheck(loss, {{"edge", edge}}, opt);
    EXPECT_GE(res.checked, 18);
    EXPECT_LT(res.max_rel_error, 1e-4) << res.worst;
}

}  // namespace
}  // namespace llie
