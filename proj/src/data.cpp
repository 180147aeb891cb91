#include "llie/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <random>

#include "llie/errors.hpp"
#include "llie/hash.hpp"
#include "llie/image_io.hpp"

namespace llie {

namespace fs = std::filesystem;

void DegradeConfig::validate() const {
    if (!(exposure_gain > 0.0 && exposure_gain <= 1.0)) throw ConfigError("exposure_gain must lie in (0, 1]");
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma must be positive");
    if (!(read_noise_sigma >= 0.0) || !std::isfinite(read_noise_sigma)) {
        throw ConfigError("read_noise_sigma must be non-negative");
    }
    if (!(shot_noise_scale >= 0.0) || !std::isfinite(shot_noise_scale)) {
        throw ConfigError("shot_noise_scale must be non-negative");
    }
}

void to_json(nlohmann::json& j, const DegradeConfig& c) {
    j = {{"exposure_gain", c.exposure_gain},
         {"gamma", c.gamma},
         {"read_noise_sigma", c.read_noise_sigma},
         {"shot_noise_scale", c.shot_noise_scale},
         {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, DegradeConfig& c) {
    c.exposure_gain = j.value("exposure_gain", c.exposure_gain);
    c.gamma = j.value("gamma", c.gamma);
    c.read_noise_sigma = j.value("read_noise_sigma", c.read_noise_sigma);
    c.shot_noise_scale = j.value("shot_noise_scale", c.shot_noise_scale);
    c.seed = j.value("seed", c.seed);
}

void to_json(nlohmann::json& j, const CannyConfig& c) {
    j = {{"sigma", c.sigma}, {"low_ratio", c.low_ratio}, {"high_ratio", c.high_ratio}};
}

void from_json(const nlohmann::json& j, CannyConfig& c) {
    c.sigma = j.value("sigma", c.sigma);
    c.low_ratio = j.value("low_ratio", c.low_ratio);
    c.high_ratio = j.value("high_ratio", c.high_ratio);
}

Tensor degrade_unclamped(const Tensor& clean, const DegradeConfig& cfg, std::uint64_t stream) {
    cfg.validate();
    require_finite(clean, "degrade input");
    std::mt19937_64 rng(derive_seed(cfg.seed, "degrade/" + std::to_string(stream)));
    std::normal_distribution<double> normal(0.0, 1.0);
    Tensor out(clean.shape());
    const auto& src = clean.values();
    auto& dst = out.values();
    for (std::size_t i = 0; i < src.size(); ++i) {
        const double exposed = cfg.exposure_gain * src[i];
        double v = cfg.gamma == 1.0 ? exposed : std::pow(exposed, cfg.gamma);
        if (cfg.shot_noise_scale > 0.0) v += cfg.shot_noise_scale * std::sqrt(std::max(exposed, 0.0)) * normal(rng);
        if (cfg.read_noise_sigma > 0.0) v += cfg.read_noise_sigma * normal(rng);
        dst[i] = v;
    }
    return out;
}

Tensor degrade(const Tensor& clean, const DegradeConfig& cfg, std::uint64_t stream) {
    Tensor out = degrade_unclamped(clean, cfg, stream);
    for (auto& v : out.values()) v = std::clamp(v, 0.0, 1.0);
    return out;
}

Tensor synthetic_scene(int h, int w, std::uint64_t seed) {
    if (h < 1 || w < 1) throw UsageError("synthetic scene needs positive dims");
    std::mt19937_64 rng(derive_seed(seed, "scene"));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto color = [&] { return std::array<double, 3>{0.1 + 0.8 * unit(rng), 0.1 + 0.8 * unit(rng), 0.1 + 0.8 * unit(rng)}; };

    Tensor img({1, 3, h, w});
    const auto top = color(), bottom = color();
    for (int y = 0; y < h; ++y) {
        const double t = h > 1 ? static_cast<double>(y) / (h - 1) : 0.0;
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) img.at(0, c, y, x) = (1.0 - t) * top[c] + t * bottom[c];
        }
    }
    const int shapes = 3 + static_cast<int>(unit(rng) * 4);
    for (int s = 0; s < shapes; ++s) {
        const auto col = color();
        const int kind = static_cast<int>(unit(rng) * 3);
        const double cx = unit(rng) * w, cy = unit(rng) * h;
        const double rx = (0.1 + 0.25 * unit(rng)) * w, ry = (0.1 + 0.25 * unit(rng)) * h;
        const double period = 3.0 + 5.0 * unit(rng);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy) / ry;
                bool inside = false;
                if (kind == 0) {
                    inside = std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
                } else if (kind == 1) {
                    inside = dx * dx + dy * dy <= 1.0;
                } else {
                    inside = std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0 &&
                             static_cast<int>(std::floor((x + y) / period)) % 2 == 0;
                }
                if (!inside) continue;
                for (int c = 0; c < 3; ++c) img.at(0, c, y, x) = col[c];
            }
        }
    }
    return img;
}

std::vector<fs::path> write_synthetic_sources(const fs::path& dir, int count, int h, int w, std::uint64_t seed) {
    if (count < 0) throw UsageError("scene count must be non-negative");
    fs::create_directories(dir);
    std::vector<fs::path> paths;
    for (int i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "scene_%03d.png", i);
        const fs::path p = dir / name;
        write_png(p, synthetic_scene(h, w, derive_seed(seed, name)));
        paths.push_back(p);
    }
    return paths;
}

std::string config_hash(const DegradeConfig& degrade, const CannyConfig& canny) {
    const nlohmann::json canonical = {{"degrade", degrade}, {"canny", canny}};
    return hex64(fnv1a(canonical.dump()));
}

nlohmann::json Manifest::to_json() const {
    nlohmann::json skipped_json = nlohmann::json::array();
    for (const auto& s : skipped) skipped_json.push_back({{"file", s.file}, {"reason", s.reason}});
    return {{"version", kVersion},
            {"ids", ids},
            {"degrade", degrade},
            {"canny", canny},
            {"counts", {{"images", ids.size()}, {"files", 3 * ids.size()}, {"skipped", skipped.size()}}},
            {"skipped", skipped_json},
            {"config_hash", config_hash}};
}

Manifest Manifest::from_json(const nlohmann::json& j, const fs::path& root) {
    try {
        if (j.at("version").get<int>() != kVersion) {
            throw IoError("unsupported manifest version " + j.at("version").dump());
        }
        Manifest m;
        m.ids = j.at("ids").get<std::vector<std::string>>();
        m.degrade = j.at("degrade").get<DegradeConfig>();
        m.canny = j.at("canny").get<CannyConfig>();
        for (const auto& s : j.value("skipped", nlohmann::json::array())) {
            m.skipped.push_back({s.at("file").get<std::string>(), s.at("reason").get<std::string>()});
        }
        m.config_hash = j.at("config_hash").get<std::string>();
        m.root = root;
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed manifest: ") + e.what());
    }
}

Manifest Manifest::load(const fs::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open manifest " + manifest_path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("cannot parse manifest " + manifest_path.string() + ": " + e.what());
    }
    return from_json(j, manifest_path.parent_path());
}

void Manifest::save() const {
    std::ofstream out(root / "manifest.json");
    if (!out) throw IoError("cannot write manifest in " + root.string());
    out << to_json().dump(2) << '\n';
}

Tensor to_rgb(const Tensor& img) {
    if (img.c() == 3) return img;
    if (img.c() != 1) throw UsageError("expected a 1- or 3-channel image, got " + img.shape().str());
    Tensor out({img.n(), 3, img.h(), img.w()});
    for (int n = 0; n < img.n(); ++n) {
        for (int c = 0; c < 3; ++c) std::copy_n(img.channel(n, 0).data(), img.shape().plane(), out.channel(n, c).data());
    }
    return out;
}

namespace {

/// Value an 8-bit PNG round trip produces.
Tensor quantize8(const Tensor& t) {
    Tensor out(t.shape());
    const auto& src = t.values();
    auto& dst = out.values();
    for (std::size_t i = 0; i < src.size(); ++i) {
        dst[i] = static_cast<double>(std::lround(std::clamp(src[i], 0.0, 1.0) * 255.0)) / 255.0;
    }
    return out;
}

bool is_png(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    return ext == ".png";
}

int reflect101(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

}  // namespace

Manifest build_dataset(const fs::path& src_dir, const fs::path& out_dir, const DegradeConfig& cfg,
                       const CannyConfig& canny) {
    cfg.validate();
    canny.validate();
    if (!fs::is_directory(src_dir)) throw IoError("source directory " + src_dir.string() + " does not exist");
    std::vector<fs::path> sources;
    for (const auto& entry : fs::directory_iterator(src_dir)) {
        if (entry.is_regular_file() && is_png(entry.path())) sources.push_back(entry.path());
    }
    std::sort(sources.begin(), sources.end());

    Manifest m;
    m.degrade = cfg;
    m.canny = canny;
    m.config_hash = config_hash(cfg, canny);
    m.root = out_dir;
    for (const char* sub : {"low", "high", "edge"}) fs::create_directories(out_dir / sub);

    for (const fs::path& src : sources) {
        const std::string id = src.stem().string();
        Tensor clean;
        try {
            clean = quantize8(to_rgb(read_png(src)));
        } catch (const std::exception& e) {
            std::cerr << "warning: skipping " << src.filename().string() << ": " << e.what() << '\n';
            m.skipped.push_back({src.filename().string(), e.what()});
            continue;
        }
        write_png(m.high_path(id), clean);
        write_png(m.edge_path(id), canny_edges(clean, canny));
        write_png(m.low_path(id), degrade(clean, cfg, fnv1a(id)));
        m.ids.push_back(id);
    }
    if (m.ids.empty()) throw IoError("no usable PNG images in " + src_dir.string());
    m.save();
    return m;
}

Tensor pad_to_multiple(const Tensor& img, int multiple, PadRecord* record) {
    if (multiple < 1) throw UsageError("pad multiple must be positive");
    const Shape s = img.shape();
    const int H = (s.h + multiple - 1) / multiple * multiple;
    const int W = (s.w + multiple - 1) / multiple * multiple;
    if (record) *record = {H - s.h, W - s.w};
    if (H == s.h && W == s.w) return img;
    Tensor out({s.n, s.c, H, W});
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            for (int y = 0; y < H; ++y) {
                const int sy = reflect101(y, s.h);
                for (int x = 0; x < W; ++x) out.at(n, c, y, x) = img.at(n, c, sy, reflect101(x, s.w));
            }
        }
    }
    return out;
}

Tensor unpad(const Tensor& img, const PadRecord& pad) {
    const Shape s = img.shape();
    const int H = s.h - pad.bottom, W = s.w - pad.right;
    if (pad.bottom < 0 || pad.right < 0 || H < 1 || W < 1) throw UsageError("invalid pad record for " + s.str());
    Tensor out({s.n, s.c, H, W});
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            for (int y = 0; y < H; ++y) {
                for (int x = 0; x < W; ++x) out.at(n, c, y, x) = img.at(n, c, y, x);
            }
        }
    }
    return out;
}

PairedBatch load_batch(const Manifest& manifest, const std::vector<std::string>& ids, int multiple) {
    if (ids.empty()) throw UsageError("load_batch needs at least one id");
    PairedBatch batch;
    std::vector<Tensor> low, high, edge;
    for (const std::string& id : ids) {
        if (std::find(manifest.ids.begin(), manifest.ids.end(), id) == manifest.ids.end()) {
            throw IoError("id '" + id + "' is not in the manifest");
        }
        Tensor l, h, e;
        try {
            l = to_rgb(read_png(manifest.low_path(id)));
            h = to_rgb(read_png(manifest.high_path(id)));
            e = read_png(manifest.edge_path(id));
        } catch (const IoError& err) {
            throw IoError("failed to load sample '" + id + "': " + err.what());
        }
        if (l.shape() != h.shape() || e.h() != h.h() || e.w() != h.w() || e.c() != 1) {
            throw IoError("sample '" + id + "' has inconsistent low/high/edge dims");
        }
        PadRecord pad;
        low.push_back(pad_to_multiple(l, multiple, &pad));
        high.push_back(pad_to_multiple(h, multiple));
        edge.push_back(pad_to_multiple(e, multiple));
        batch.pads.push_back(pad);
        if (low.back().shape() != low.front().shape()) {
            throw UsageError("samples in one batch must share padded dims ('" + id + "' differs)");
        }
    }
    batch.ids = ids;
    batch.low = Tensor::stack_batch(low);
    batch.high = Tensor::stack_batch(high);
    batch.edge = Tensor::stack_batch(edge);
    return batch;
}

}  // namespace llie
