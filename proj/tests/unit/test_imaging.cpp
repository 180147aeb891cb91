#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <opencv2/imgproc.hpp>

#include "llie/imaging.hpp"
#include "oracles.hpp"

namespace llie {
namespace {

constexpr double kOracleTol = 1e-6;

// Gradient maps -------------------------------------------------------------

TEST(GradientMaps, ConstantInputGivesZeroMaps) {
    const auto maps = compute_gradient_maps(Tensor({1, 2, 6, 5}, 0.7));
    for (const Tensor& m : maps) {
        for (double v : m.values()) EXPECT_EQ(v, 0.0);
    }
}

TEST(GradientMaps, HorizontalRamp) {
    Tensor f({1, 1, 4, 6});
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 6; ++x) f.at(0, 0, y, x) = x;
    }
    const auto maps = compute_gradient_maps(f);
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 5; ++x) EXPECT_EQ(maps[0].at(0, 0, y, x), 1.0);
    }
    for (double v : maps[2].values()) EXPECT_EQ(v, 0.0);
}

TEST(GradientMaps, MatchPerPixelOracle) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor f = oracle::random_tensor({1, 1, 5, 5}, rng);
        const auto maps = compute_gradient_maps(f);
        for (int d = 0; d < 8; ++d) EXPECT_LT(oracle::max_abs_diff(maps[d], oracle::gradient_map(f, d)), kOracleTol);
    }
}

TEST(GradientMaps, OppositeDirectionsAreAntisymmetric) {
    std::mt19937_64 rng(2);
    const Tensor f = oracle::random_tensor({2, 3, 7, 6}, rng);
    const auto maps = compute_gradient_maps(f);
    // (direction, opposite, dx, dy)
    const int pairs[4][4] = {{0, 1, 1, 0}, {2, 3, 0, 1}, {4, 7, 1, 1}, {5, 6, 1, -1}};
    for (const auto& p : pairs) {
        for (int n = 0; n < 2; ++n) {
            for (int c = 0; c < 3; ++c) {
                for (int y = 1; y < 6; ++y) {
                    for (int x = 1; x < 5; ++x) {
                        EXPECT_EQ(maps[p[0]].at(n, c, y, x), -maps[p[1]].at(n, c, y + p[3], x + p[2]));
                    }
                }
            }
        }
    }
}

// Canny ----------------------------------------------------------------------

TEST(Canny, UniformImageHasNoEdges) {
    const Tensor e = canny_edges(Tensor({1, 3, 16, 16}, 0.4));
    for (double v : e.values()) EXPECT_EQ(v, 0.0);
}

/// OpenCV's Canny fed with the same blurred Sobel derivatives.
Tensor opencv_canny(const Tensor& gray, double low_ratio, double high_ratio) {
    cv::Mat img(gray.h(), gray.w(), CV_64F);
    for (int y = 0; y < gray.h(); ++y) {
        for (int x = 0; x < gray.w(); ++x) img.at<double>(y, x) = gray.at(0, 0, y, x) * 255.0;
    }
    cv::Mat blurred, dx, dy;
    cv::GaussianBlur(img, blurred, cv::Size(7, 7), 1.0, 1.0, cv::BORDER_REFLECT_101);
    cv::Sobel(blurred, dx, CV_64F, 1, 0, 3, 1, 0, cv::BORDER_REFLECT_101);
    cv::Sobel(blurred, dy, CV_64F, 0, 1, 3, 1, 0, cv::BORDER_REFLECT_101);
    cv::Mat mag;
    cv::magnitude(dx, dy, mag);
    double max_mag = 0.0;
    cv::minMaxLoc(mag, nullptr, &max_mag);
    cv::Mat dx16, dy16, edges;
    dx.convertTo(dx16, CV_16S);
    dy.convertTo(dy16, CV_16S);
    cv::Canny(dx16, dy16, edges, low_ratio * max_mag, high_ratio * max_mag, true);
    Tensor out({1, 1, gray.h(), gray.w()});
    for (int y = 0; y < gray.h(); ++y) {
        for (int x = 0; x < gray.w(); ++x) out.at(0, 0, y, x) = edges.at<unsigned char>(y, x) ? 1.0 : 0.0;
    }
    return out;
}

TEST(Canny, StepEdgeGivesOneColumnLikeReference) {
    Tensor img({1, 1, 24, 32});
    for (int y = 0; y < 24; ++y) {
        for (int x = 16; x < 32; ++x) img.at(0, 0, y, x) = 1.0;
    }
    const Tensor ours = canny_edges(img, 0.1, 0.2);
    const Tensor ref = opencv_canny(img, 0.1, 0.2);
    EXPECT_EQ(ours.values(), ref.values());
    int edge_column = -1;
    for (int x = 0; x < 32; ++x) {
        int count = 0;
        for (int y = 0; y < 24; ++y) count += ours.at(0, 0, y, x) > 0.5;
        if (count == 0) continue;
        EXPECT_EQ(count, 24);
        EXPECT_EQ(edge_column, -1) << "second edge column at " << x;
        edge_column = x;
    }
    EXPECT_TRUE(edge_column == 15 || edge_column == 16) << edge_column;
}

TEST(Canny, HorizontalStepMatchesReference) {
    Tensor img({1, 1, 30, 20});
    for (int y = 11; y < 30; ++y) {
        for (int x = 0; x < 20; ++x) img.at(0, 0, y, x) = 0.8;
    }
    EXPECT_EQ(canny_edges(img, 0.1, 0.2).values(), opencv_canny(img, 0.1, 0.2).values());
}

TEST(Canny, OutputIsBinary) {
    std::mt19937_64 rng(3);
    const Tensor e = canny_edges(oracle::random_tensor({2, 3, 20, 20}, rng, 0.0, 1.0));
    for (double v : e.values()) EXPECT_TRUE(v == 0.0 || v == 1.0);
}

TEST(Canny, InvariantToConstantOffset) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 5; ++trial) {
        const Tensor img = oracle::random_tensor({1, 1, 24, 24}, rng, 0.0, 0.9);
        const Tensor base = canny_edges(img);
        for (double c : {0.013, 0.05, 0.0999}) {
            Tensor shifted = img;
            for (double& v : shifted.values()) v += c;
            EXPECT_EQ(canny_edges(shifted).values(), base.values()) << "offset " << c;
        }
    }
}

// Instance norm ---------------------------------------------------------------

TEST(InstanceNorm, ConstantChannelMapsToZero) {
    const Tensor y = instance_norm(Tensor({1, 2, 3, 3}, 4.2), 1e-5);
    for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(InstanceNorm, PlusMinusOne) {
    Tensor x({1, 1, 2, 2}, std::vector<double>{-1, 1, 1, -1});
    const double eps = 1e-3;
    const Tensor y = instance_norm(x, eps);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y[i], x[i] / std::sqrt(1.0 + eps), 1e-15);
}

TEST(InstanceNorm, MatchesTwoPassOracle) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor x = oracle::random_tensor({1, 1, 4, 4}, rng, -3, 3);
        EXPECT_LT(oracle::max_abs_diff(instance_norm(x, 1e-5), oracle::instance_norm(x, 1e-5)), kOracleTol);
    }
}

TEST(InstanceNorm, ZeroMeanUnitVariance) {
    std::mt19937_64 rng(6);
    const Tensor x = oracle::random_tensor({3, 4, 6, 5}, rng, -5, 5);
    const Tensor y = instance_norm(x, 1e-12);
    for (int n = 0; n < 3; ++n) {
        for (int c = 0; c < 4; ++c) {
            double mean = 0.0, var = 0.0;
            for (double v : y.channel(n, c)) mean += v;
            mean /= 30.0;
            for (double v : y.channel(n, c)) var += (v - mean) * (v - mean);
            EXPECT_LT(std::abs(mean), 1e-6);
            EXPECT_NEAR(var / 30.0, 1.0, 1e-4);
        }
    }
}

// PSNR / SSIM --------------------------------------------------------------------

TEST(Psnr, IdenticalIsCapped) {
    std::mt19937_64 rng(7);
    const Tensor a = oracle::random_tensor({1, 3, 8, 8}, rng, 0, 1);
    EXPECT_EQ(psnr(a, a), kPsnrCap);
    EXPECT_EQ(kPsnrCap, 100.0);
}

TEST(Psnr, UniformOffsetClosedForm) {
    const Tensor a({1, 3, 8, 8}, 0.2);
    Tensor b = a;
    for (double& v : b.values()) v += 16.0 / 255.0;
    EXPECT_NEAR(psnr(a, b), 20.0 * std::log10(255.0 / 16.0), 1e-9);
    EXPECT_NEAR(psnr(a, b), 24.0484, 1e-4);
}

TEST(Psnr, MatchesScalarOracleAndIsSymmetric) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor a = oracle::random_tensor({1, 3, 6, 7}, rng, 0, 1), b = oracle::random_tensor({1, 3, 6, 7}, rng, 0, 1);
        EXPECT_NEAR(psnr(a, b), oracle::psnr(a, b, 1.0), 1e-9);
        EXPECT_EQ(psnr(a, b), psnr(b, a));
    }
}

TEST(Ssim, IdenticalIsExactlyOne) {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 5; ++trial) {
        const Tensor a = oracle::random_tensor({1, 3, 16, 14}, rng, 0, 1);
        EXPECT_EQ(ssim(a, a), 1.0);
    }
}

TEST(Ssim, ConstantImagesLuminanceTermOnly) {
    const Tensor a({1, 1, 16, 16}, 0.25), b({1, 1, 16, 16}, 0.75);
    const double c1 = 1e-4;
    const double expected = (2 * 0.25 * 0.75 + c1) / (0.25 * 0.25 + 0.75 * 0.75 + c1);
    EXPECT_NEAR(ssim(a, b), expected, 1e-12);
    EXPECT_NEAR(expected, 0.60006, 1e-5);
}

TEST(Ssim, MatchesWindowOracleAndIsSymmetric) {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 20; ++trial) {
        const Shape s{1, trial % 2 ? 3 : 1, 11 + trial % 5, 12 + trial % 3};
        const Tensor a = oracle::random_tensor(s, rng, 0, 1), b = oracle::random_tensor(s, rng, 0, 1);
        const double expected = oracle::ssim_plane(oracle::luma(a), oracle::luma(b), 0);
        EXPECT_NEAR(ssim(a, b), expected, kOracleTol);
        EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-15);
    }
}

TEST(Ssim, SmallerThanWindowThrows) {
    EXPECT_THROW(ssim(Tensor({1, 1, 8, 8}), Tensor({1, 1, 8, 8})), UsageError);
}

// Edge metrics -------------------------------------------------------------------

Tensor random_binary(Shape s, std::mt19937_64& rng) {
    std::bernoulli_distribution coin(0.3);
    Tensor t(s);
    for (double& v : t.values()) v = coin(rng) ? 1.0 : 0.0;
    return t;
}

TEST(EdgeMetrics, PerfectPrediction) {
    std::mt19937_64 rng(11);
    const Tensor gt = random_binary({1, 1, 8, 8}, rng);
    const EdgeScores s = edge_metrics(gt, gt);
    EXPECT_LT(s.ce, 1e-6);
    EXPECT_EQ(s.l2, 0.0);
}

TEST(EdgeMetrics, HalfPredictorIsLn2) {
    std::mt19937_64 rng(12);
    const Tensor gt = random_binary({1, 1, 8, 8}, rng);
    EXPECT_NEAR(edge_metrics(Tensor(gt.shape(), 0.5), gt).ce, std::log(2.0), 1e-12);
}

TEST(EdgeMetrics, MatchPerPixelOracle) {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor gt = random_binary({1, 1, 6, 7}, rng);
        const Tensor pred = oracle::random_tensor(gt.shape(), rng, 0, 1);
        const EdgeScores s = edge_metrics(pred, gt);
        EXPECT_NEAR(s.ce, oracle::edge_ce(pred, gt, kBceEps), 1e-9);
        EXPECT_NEAR(s.l2, oracle::edge_l2(pred, gt), 1e-9);
        EXPECT_GE(s.ce, 0.0);
    }
}

TEST(EdgeMetrics, CeMinimizedAtGroundTruth) {
    std::mt19937_64 rng(14);
    const Tensor gt = random_binary({1, 1, 6, 6}, rng);
    const double best = edge_metrics(gt, gt).ce;
    for (int trial = 0; trial < 20; ++trial) {
        Tensor pred = gt;
        std::uniform_int_distribution<std::size_t> pick(0, pred.size() - 1);
        const std::size_t i = pick(rng);
        pred[i] = pred[i] > 0.5 ? 0.9 : 0.1;
        EXPECT_GT(edge_metrics(pred, gt).ce, best);
    }
}

// Resize -----------------------------------------------------------------------------

TEST(ResizeMap, SameSizeIsIdentity) {
    std::mt19937_64 rng(15);
    const Tensor m = oracle::random_tensor({1, 1, 5, 4}, rng, 0, 1);
    EXPECT_EQ(resize_map(m, 5, 4).values(), m.values());
}

TEST(ResizeMap, TwoByTwoToOne) {
    const Tensor m({1, 1, 2, 2}, std::vector<double>{0, 1, 0, 1});
    EXPECT_NEAR(resize_map(m, 1, 1)[0], 0.5, 1e-15);
}

TEST(ResizeMap, MatchesBilinearOracle) {
    std::mt19937_64 rng(16);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor m = oracle::random_tensor({1, 1, 4, 4}, rng, 0, 1);
        EXPECT_LT(oracle::max_abs_diff(resize_map(m, 3, 3), oracle::bilinear(m, 3, 3)), kOracleTol);
    }
}

// Report -----------------------------------------------------------------------------

TEST(MetricReport, MeansEqualHandAveragesOfEntries) {
    MetricReport r;
    r.ids = {"a", "b", "c"};
    r.psnr = {20.0, 25.5, 31.25};
    r.ssim = {0.5, 0.75, 0.9};
    r.edge_ce = {0.1, 0.2, 0.4};
    r.edge_l2 = {0.01, 0.02, 0.06};
    const nlohmann::json j = r.to_json();
    EXPECT_EQ(j.at("schema_version"), MetricReport::kSchemaVersion);
    double p = 0, s = 0, ce = 0;
    for (const auto& e : j.at("images")) {
        p += e.at("psnr").get<double>();
        s += e.at("ssim").get<double>();
        ce += e.at("edge_ce").get<double>();
    }
    EXPECT_NEAR(j.at("mean").at("psnr").get<double>(), p / 3, 1e-12);
    EXPECT_NEAR(j.at("mean").at("ssim").get<double>(), s / 3, 1e-12);
    EXPECT_NEAR(j.at("mean").at("edge_ce").get<double>(), ce / 3, 1e-12);
}

}  // namespace
}  // namespace llie
