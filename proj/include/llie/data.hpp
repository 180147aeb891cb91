#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llie/imaging.hpp"
#include "llie/tensor.hpp"

namespace llie {

struct DegradeConfig {
    double exposure_gain = 0.25;
    double gamma = 1.2;
    double read_noise_sigma = 0.01;
    double shot_noise_scale = 0.01;
    std::uint64_t seed = 0;

    void validate() const;
};

void to_json(nlohmann::json& j, const DegradeConfig& c);
void from_json(const nlohmann::json& j, DegradeConfig& c);
void to_json(nlohmann::json& j, const CannyConfig& c);
void from_json(const nlohmann::json& j, CannyConfig& c);

/// (gain * clean)^gamma + shot + read noise, before clamping. `stream`
/// selects an independent noise sequence under the same seed.
Tensor degrade_unclamped(const Tensor& clean, const DegradeConfig& cfg, std::uint64_t stream = 0);
/// degrade_unclamped clipped to [0, 1].
Tensor degrade(const Tensor& clean, const DegradeConfig& cfg, std::uint64_t stream = 0);

/// Procedural RGB scene (1, 3, h, w) in [0, 1]: shaded background, random
/// rectangles, discs and stripes.
Tensor synthetic_scene(int h, int w, std::uint64_t seed);

/// Writes `count` synthetic scenes as scene_XXX.png into `dir`.
std::vector<std::filesystem::path> write_synthetic_sources(const std::filesystem::path& dir, int count, int h,
                                                           int w, std::uint64_t seed);

struct SkippedFile {
    std::string file;
    std::string reason;
};

struct Manifest {
    static constexpr int kVersion = 1;

    std::vector<std::string> ids;
    DegradeConfig degrade;
    CannyConfig canny;
    std::vector<SkippedFile> skipped;
    std::string config_hash;
    /// Directory holding manifest.json; not serialized.
    std::filesystem::path root;

    nlohmann::json to_json() const;
    static Manifest from_json(const nlohmann::json& j, const std::filesystem::path& root);
    static Manifest load(const std::filesystem::path& manifest_path);
    void save() const;

    std::filesystem::path low_path(const std::string& id) const { return root / "low" / (id + ".png"); }
    std::filesystem::path high_path(const std::string& id) const { return root / "high" / (id + ".png"); }
    std::filesystem::path edge_path(const std::string& id) const { return root / "edge" / (id + ".png"); }
};

/// Hex FNV-1a of the canonical JSON of both configs.
std::string config_hash(const DegradeConfig& degrade, const CannyConfig& canny);

/// Converts every readable PNG in `src_dir` into low/high/edge triplets
/// under `out_dir` and writes manifest.json. Unreadable files are skipped
/// and listed in the manifest. Throws IoError when nothing usable is found.
Manifest build_dataset(const std::filesystem::path& src_dir, const std::filesystem::path& out_dir,
                       const DegradeConfig& cfg, const CannyConfig& canny);

/// Bottom and right padding added to reach the size multiple.
struct PadRecord {
    int bottom = 0;
    int right = 0;
    bool operator==(const PadRecord&) const = default;
};

/// Reflect-101 padding on the bottom and right edges up to the next
/// multiple of `multiple`.
Tensor pad_to_multiple(const Tensor& img, int multiple, PadRecord* record = nullptr);
Tensor unpad(const Tensor& img, const PadRecord& pad);

struct PairedBatch {
    std::vector<std::string> ids;
    Tensor low;
    Tensor high;
    Tensor edge;
    std::vector<PadRecord> pads;
};

/// Loads the triplets of `ids`, each padded to `multiple`. All padded
/// samples must share dims.
PairedBatch load_batch(const Manifest& manifest, const std::vector<std::string>& ids, int multiple);

/// 3-channel view of an image; gray inputs are replicated.
Tensor to_rgb(const Tensor& img);

}  // namespace llie
