#include "llie/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "llie/ops.hpp"

namespace llie {

std::array<Tensor, 8> compute_gradient_maps(const Tensor& f) {
    require_finite(f, "compute_gradient_maps");
    NoGradGuard no_grad;
    const Var x = ops::constant(f);
    std::array<Tensor, 8> maps;
    for (std::size_t i = 0; i < ops::kDirections.size(); ++i) {
        maps[i] = ops::directional_gradient(x, ops::kDirections[i]).value();
    }
    return maps;
}

void CannyConfig::validate() const {
    if (!(sigma > 0.0)) throw ConfigError("canny sigma must be positive");
    if (!(low_ratio >= 0.0) || !(low_ratio < high_ratio)) {
        throw ConfigError("canny thresholds must satisfy 0 <= low < high");
    }
}

Tensor luminance(const Tensor& img) {
    const Shape s = img.shape();
    if (s.c != 1 && s.c != 3) throw UsageError("luminance expects 1 or 3 channels, got " + s.str());
    Tensor out({s.n, 1, s.h, s.w});
    for (int n = 0; n < s.n; ++n) {
        auto dst = out.channel(n, 0);
        if (s.c == 1) {
            std::copy(img.channel(n, 0).begin(), img.channel(n, 0).end(), dst.begin());
            continue;
        }
        auto r = img.channel(n, 0), g = img.channel(n, 1), b = img.channel(n, 2);
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
    }
    return out;
}

namespace {

/// Reflect-101 border index (…2 1 | 0 1 2 … n-1 | n-2 …).
int reflect101(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

std::vector<double> gaussian_kernel(double sigma, int radius) {
    std::vector<double> k(2 * radius + 1);
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        total += k[i + radius];
    }
    for (double& v : k) v /= total;
    return k;
}

std::vector<double> blur_plane(const double* src, int h, int w, double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    const auto k = gaussian_kernel(sigma, radius);
    std::vector<double> tmp(static_cast<std::size_t>(h) * w), out(tmp.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * src[y * w + reflect101(x + i, w)];
            tmp[y * w + x] = acc;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp[reflect101(y + i, h) * w + x];
            out[y * w + x] = acc;
        }
    }
    return out;
}

void canny_plane(const double* lum, int h, int w, const CannyConfig& cfg, double* edges) {
    const auto blurred = blur_plane(lum, h, w, cfg.sigma);
    auto px = [&](int y, int x) { return blurred[reflect101(y, h) * w + reflect101(x, w)]; };

    const std::size_t count = static_cast<std::size_t>(h) * w;
    std::vector<double> gx(count), gy(count), mag(count);
    // Magnitudes are snapped to a 2^-32 grid so that ties between
    // neighbours survive rounding noise (e.g. after a constant offset).
    constexpr double grid = 4294967296.0;
    double max_mag = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double dx = (px(y - 1, x + 1) + 2 * px(y, x + 1) + px(y + 1, x + 1)) -
                              (px(y - 1, x - 1) + 2 * px(y, x - 1) + px(y + 1, x - 1));
            const double dy = (px(y + 1, x - 1) + 2 * px(y + 1, x) + px(y + 1, x + 1)) -
                              (px(y - 1, x - 1) + 2 * px(y - 1, x) + px(y - 1, x + 1));
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            gx[i] = std::round(dx * grid) / grid;
            gy[i] = std::round(dy * grid) / grid;
            mag[i] = std::round(std::sqrt(dx * dx + dy * dy) * grid) / grid;
            max_mag = std::max(max_mag, mag[i]);
        }
    }
    const double low = cfg.low_ratio * max_mag;
    const double high = cfg.high_ratio * max_mag;
    auto m_at = [&](int y, int x) {
        return (y < 0 || y >= h || x < 0 || x >= w) ? 0.0 : mag[static_cast<std::size_t>(y) * w + x];
    };

    // 0: not an edge, 1: weak candidate, 2: strong.
    std::vector<unsigned char> state(count, 0);
    std::vector<int> stack;
    constexpr double tan22 = 0.41421356237309504880;
    constexpr double tan67 = 2.41421356237309504880;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            const double m = mag[i];
            if (!(m > low)) continue;
            const double ax = std::abs(gx[i]), ay = std::abs(gy[i]);
            bool keep;
            if (ay < tan22 * ax) {
                keep = m > m_at(y, x - 1) && m >= m_at(y, x + 1);
            } else if (ay > tan67 * ax) {
                keep = m > m_at(y - 1, x) && m >= m_at(y + 1, x);
            } else {
                const int s = (gx[i] < 0) != (gy[i] < 0) ? -1 : 1;
                keep = m > m_at(y - 1, x - s) && m > m_at(y + 1, x + s);
            }
            if (!keep) continue;
            if (m > high) {
                state[i] = 2;
                stack.push_back(static_cast<int>(i));
            } else {
                state[i] = 1;
            }
        }
    }
    while (!stack.empty()) {
        const int i = stack.back();
        stack.pop_back();
        const int y = i / w, x = i % w;
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                const int ny = y + dy, nx = x + dx;
                if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                const std::size_t j = static_cast<std::size_t>(ny) * w + nx;
                if (state[j] == 1) {
                    state[j] = 2;
                    stack.push_back(static_cast<int>(j));
                }
            }
        }
    }
    for (std::size_t i = 0; i < count; ++i) edges[i] = state[i] == 2 ? 1.0 : 0.0;
}

}  // namespace

Tensor canny_edges(const Tensor& img, const CannyConfig& cfg) {
    cfg.validate();
    require_finite(img, "canny_edges");
    const Tensor lum = luminance(img);
    Tensor out(lum.shape());
    for (int n = 0; n < lum.n(); ++n) {
        canny_plane(lum.channel(n, 0).data(), lum.h(), lum.w(), cfg, out.channel(n, 0).data());
    }
    return out;
}

Tensor canny_edges(const Tensor& img, double low_ratio, double high_ratio) {
    CannyConfig cfg;
    cfg.low_ratio = low_ratio;
    cfg.high_ratio = high_ratio;
    return canny_edges(img, cfg);
}

Tensor instance_norm(const Tensor& x, double eps) {
    NoGradGuard no_grad;
    return ops::instance_norm(ops::constant(x), eps).value();
}

namespace {

double psnr_from_mse(double mse, double max_val) {
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(max_val * max_val / mse));
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b, double max_val) {
    require_same_shape(a, b, "psnr");
    if (!(max_val > 0.0)) throw UsageError("psnr max_val must be positive");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return psnr_from_mse(acc / static_cast<double>(a.size()), max_val);
}

std::vector<double> psnr_per_image(const Tensor& a, const Tensor& b, double max_val) {
    require_same_shape(a, b, "psnr");
    std::vector<double> out;
    for (int n = 0; n < a.n(); ++n) out.push_back(psnr(a.slice_batch(n, 1), b.slice_batch(n, 1), max_val));
    return out;
}

double ssim_plane(const double* a, const double* b, int h, int w, const SsimOptions& opt) {
    const int win = opt.window;
    if (h < win || w < win) {
        throw UsageError("image " + std::to_string(h) + "x" + std::to_string(w) +
                         " is smaller than the SSIM window");
    }
    const int r = win / 2;
    const auto g1 = gaussian_kernel(opt.sigma, r);
    const double c1 = (0.01 * opt.data_range) * (0.01 * opt.data_range);
    const double c2 = (0.03 * opt.data_range) * (0.03 * opt.data_range);

    // Separable filtering of a, b, a^2, b^2, ab; rows first, then the valid
    // columns.
    const int ow = w - win + 1, oh = h - win + 1;
    std::array<std::vector<double>, 5> rows;
    for (auto& v : rows) v.assign(static_cast<std::size_t>(h) * ow, 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < ow; ++x) {
            double s[5] = {0, 0, 0, 0, 0};
            for (int i = 0; i < win; ++i) {
                const double av = a[y * w + x + i], bv = b[y * w + x + i], k = g1[i];
                s[0] += k * av;
                s[1] += k * bv;
                s[2] += k * av * av;
                s[3] += k * bv * bv;
                s[4] += k * av * bv;
            }
            for (int j = 0; j < 5; ++j) rows[j][y * ow + x] = s[j];
        }
    }
    double total = 0.0;
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double s[5] = {0, 0, 0, 0, 0};
            for (int i = 0; i < win; ++i) {
                for (int j = 0; j < 5; ++j) s[j] += g1[i] * rows[j][(y + i) * ow + x];
            }
            const double mu_a = s[0], mu_b = s[1];
            const double va = s[2] - mu_a * mu_a, vb = s[3] - mu_b * mu_b, cov = s[4] - mu_a * mu_b;
            total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                     ((mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2));
        }
    }
    return total / (static_cast<double>(oh) * ow);
}

std::vector<double> ssim_per_image(const Tensor& a, const Tensor& b, const SsimOptions& opt) {
    require_same_shape(a, b, "ssim");
    const Tensor la = luminance(a), lb = luminance(b);
    std::vector<double> out;
    for (int n = 0; n < la.n(); ++n) {
        out.push_back(ssim_plane(la.channel(n, 0).data(), lb.channel(n, 0).data(), la.h(), la.w(), opt));
    }
    return out;
}

double ssim(const Tensor& a, const Tensor& b, const SsimOptions& opt) {
    const auto v = ssim_per_image(a, b, opt);
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

namespace {

EdgeScores edge_scores(std::span<const double> p, std::span<const double> t) {
    double ce = 0.0, l2 = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double q = std::clamp(p[i], kBceEps, 1.0 - kBceEps);
        ce -= t[i] * std::log(q) + (1.0 - t[i]) * std::log(1.0 - q);
        l2 += (p[i] - t[i]) * (p[i] - t[i]);
    }
    const double m = static_cast<double>(p.size());
    return {ce / m, l2 / m};
}

}  // namespace

EdgeScores edge_metrics(const Tensor& pred, const Tensor& gt) {
    require_same_shape(pred, gt, "edge_metrics");
    return edge_scores(pred.values(), gt.values());
}

std::vector<EdgeScores> edge_metrics_per_image(const Tensor& pred, const Tensor& gt) {
    require_same_shape(pred, gt, "edge_metrics");
    std::vector<EdgeScores> out;
    for (int n = 0; n < pred.n(); ++n) out.push_back(edge_scores(pred.sample(n), gt.sample(n)));
    return out;
}

Tensor resize_map(const Tensor& m, int target_h, int target_w) {
    if (m.h() == target_h && m.w() == target_w) return m;
    NoGradGuard no_grad;
    return ops::resize_bilinear(ops::constant(m), target_h, target_w).value();
}

namespace {

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

double MetricReport::mean_psnr() const { return mean_of(psnr); }
double MetricReport::mean_ssim() const { return mean_of(ssim); }
double MetricReport::mean_edge_ce() const { return mean_of(edge_ce); }
double MetricReport::mean_edge_l2() const { return mean_of(edge_l2); }

nlohmann::json MetricReport::to_json() const {
    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;
    nlohmann::json images = nlohmann::json::array();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        nlohmann::json e{{"id", ids[i]}};
        if (i < psnr.size()) e["psnr"] = psnr[i];
        if (i < ssim.size()) e["ssim"] = ssim[i];
        if (i < edge_ce.size()) {
            e["edge_ce"] = edge_ce[i];
            e["edge_l2"] = edge_l2[i];
        }
        images.push_back(e);
    }
    j["images"] = images;
    nlohmann::json mean{{"psnr", mean_psnr()}, {"ssim", mean_ssim()}};
    if (has_edges()) {
        mean["edge_ce"] = mean_edge_ce();
        mean["edge_l2"] = mean_edge_l2();
    }
    j["mean"] = mean;
    j["count"] = ids.size();
    return j;
}

std::string MetricReport::to_csv() const {
    std::ostringstream os;
    os.precision(10);
    os << "id,psnr,ssim" << (has_edges() ? ",edge_ce,edge_l2" : "") << "\n";
    for (std::size_t i = 0; i < ids.size(); ++i) {
        os << ids[i] << "," << psnr[i] << "," << ssim[i];
        if (has_edges()) os << "," << edge_ce[i] << "," << edge_l2[i];
        os << "\n";
    }
    os << "mean," << mean_psnr() << "," << mean_ssim();
    if (has_edges()) os << "," << mean_edge_ce() << "," << mean_edge_l2();
    os << "\n";
    return os.str();
}

}  // namespace llie
