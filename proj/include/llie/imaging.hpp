#pragma once

#include <array>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llie/tensor.hpp"

namespace llie {

/// PSNR reported for identical images.
inline constexpr double kPsnrCap = 100.0;
/// Predictions are clamped to [eps, 1 - eps] before taking logarithms.
inline constexpr double kBceEps = 1e-7;

/// First-order forward differences toward each of the eight compass
/// directions (order of ops::kDirections), zero where the neighbor lies
/// outside the tensor.
std::array<Tensor, 8> compute_gradient_maps(const Tensor& f);

struct CannyConfig {
    double sigma = 1.0;
    /// Hysteresis thresholds as fractions of the image's largest gradient
    /// magnitude.
    double low_ratio = 0.1;
    double high_ratio = 0.2;

    void validate() const;
};

/// Binary edge map (N, 1, H, W): Gaussian blur, Sobel gradients,
/// non-maximum suppression and hysteresis, per image on luminance.
Tensor canny_edges(const Tensor& img, const CannyConfig& cfg = {});
Tensor canny_edges(const Tensor& img, double low_ratio, double high_ratio);

/// BT.601 luma for 3-channel inputs; single-channel inputs are copied.
Tensor luminance(const Tensor& img);

Tensor instance_norm(const Tensor& x, double eps);

/// PSNR over all elements, capped at kPsnrCap for zero error.
double psnr(const Tensor& a, const Tensor& b, double max_val = 1.0);
std::vector<double> psnr_per_image(const Tensor& a, const Tensor& b, double max_val = 1.0);

struct SsimOptions {
    int window = 11;
    double sigma = 1.5;
    double data_range = 1.0;
};

/// Mean SSIM of one image pair (single-channel planes of equal size) over
/// all fully contained Gaussian windows.
double ssim_plane(const double* a, const double* b, int h, int w, const SsimOptions& opt = {});
/// Per-image SSIM, computed on luminance for color inputs.
std::vector<double> ssim_per_image(const Tensor& a, const Tensor& b, const SsimOptions& opt = {});
double ssim(const Tensor& a, const Tensor& b, const SsimOptions& opt = {});

struct EdgeScores {
    double ce = 0.0;
    double l2 = 0.0;
};

EdgeScores edge_metrics(const Tensor& pred, const Tensor& gt);
std::vector<EdgeScores> edge_metrics_per_image(const Tensor& pred, const Tensor& gt);

/// Bilinear resize with half-pixel centers.
Tensor resize_map(const Tensor& m, int target_h, int target_w);

/// Per-image and aggregate quality numbers written by the evaluator.
struct MetricReport {
    static constexpr int kSchemaVersion = 1;

    std::vector<std::string> ids;
    std::vector<double> psnr;
    std::vector<double> ssim;
    std::vector<double> edge_ce;
    std::vector<double> edge_l2;

    double mean_psnr() const;
    double mean_ssim() const;
    double mean_edge_ce() const;
    double mean_edge_l2() const;
    bool has_edges() const { return !edge_ce.empty(); }

    nlohmann::json to_json() const;
    std::string to_csv() const;
};

}  // namespace llie
