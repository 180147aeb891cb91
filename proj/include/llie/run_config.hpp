#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llie/data.hpp"
#include "llie/model.hpp"
#include "llie/training.hpp"

namespace llie {

/// Everything one command needs. Archived as effective_config.json in the
/// command's output directory; feeding that file back through --config
/// reproduces the run.
struct RunConfig {
    std::string mode;
    std::string out_dir;

    // make-data
    std::string source_dir;
    int synthetic_count = 0;
    int synthetic_height = 64;
    int synthetic_width = 64;
    std::uint64_t synthetic_seed = 0;
    DegradeConfig degrade;
    CannyConfig canny;

    // train
    std::string data;  // dataset directory or manifest path
    std::string resume;
    ModelConfig model;
    TrainConfig train;
    int log_every = 50;

    // enhance
    std::string checkpoint;
    std::vector<std::string> inputs;
    bool dump_intermediates = false;
    std::string debug_dir;

    // eval
    std::string pred_dir;
    std::string gt_dir;
    std::string pred_edge_dir;
    std::string gt_edge_dir;

    void validate() const;
    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;
};

/// Accepts a dataset directory or a manifest file.
std::filesystem::path manifest_path_for(const std::filesystem::path& data);

}  // namespace llie
