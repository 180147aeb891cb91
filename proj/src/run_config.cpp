#include "llie/run_config.hpp"

#include <fstream>
#include <set>

#include "llie/errors.hpp"

namespace llie {

namespace fs = std::filesystem;

void RunConfig::validate() const {
    degrade.validate();
    canny.validate();
    model.validate();
    train.validate();
    if (synthetic_count < 0) throw ConfigError("synthetic_count must be non-negative");
    if (synthetic_height < 1 || synthetic_width < 1) throw ConfigError("synthetic image dims must be positive");
    if (log_every < 0) throw ConfigError("log_every must be non-negative");
}

nlohmann::json RunConfig::to_json() const {
    return {{"mode", mode},
            {"out_dir", out_dir},
            {"make_data",
             {{"source_dir", source_dir},
              {"synthetic_count", synthetic_count},
              {"synthetic_height", synthetic_height},
              {"synthetic_width", synthetic_width},
              {"synthetic_seed", synthetic_seed},
              {"degrade", degrade},
              {"canny", canny}}},
            {"train", {{"data", data}, {"resume", resume}, {"log_every", log_every}, {"options", train}}},
            {"model", model},
            {"enhance",
             {{"checkpoint", checkpoint},
              {"inputs", inputs},
              {"dump_intermediates", dump_intermediates},
              {"debug_dir", debug_dir}}},
            {"eval",
             {{"pred_dir", pred_dir},
              {"gt_dir", gt_dir},
              {"pred_edge_dir", pred_edge_dir},
              {"gt_edge_dir", gt_edge_dir}}}};
}

namespace {

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    const std::set<std::string> keys(allowed.begin(), allowed.end());
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!keys.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig c;
    try {
        reject_unknown(j, {"mode", "out_dir", "make_data", "train", "model", "enhance", "eval"}, "run config");
        c.mode = j.value("mode", c.mode);
        c.out_dir = j.value("out_dir", c.out_dir);
        if (j.contains("make_data")) {
            const auto& m = j.at("make_data");
            reject_unknown(m,
                           {"source_dir", "synthetic_count", "synthetic_height", "synthetic_width", "synthetic_seed",
                            "degrade", "canny"},
                           "make_data");
            c.source_dir = m.value("source_dir", c.source_dir);
            c.synthetic_count = m.value("synthetic_count", c.synthetic_count);
            c.synthetic_height = m.value("synthetic_height", c.synthetic_height);
            c.synthetic_width = m.value("synthetic_width", c.synthetic_width);
            c.synthetic_seed = m.value("synthetic_seed", c.synthetic_seed);
            if (m.contains("degrade")) c.degrade = m.at("degrade").get<DegradeConfig>();
            if (m.contains("canny")) c.canny = m.at("canny").get<CannyConfig>();
        }
        if (j.contains("train")) {
            const auto& t = j.at("train");
            reject_unknown(t, {"data", "resume", "log_every", "options"}, "train");
            c.data = t.value("data", c.data);
            c.resume = t.value("resume", c.resume);
            c.log_every = t.value("log_every", c.log_every);
            if (t.contains("options")) c.train = t.at("options").get<TrainConfig>();
        }
        if (j.contains("model")) c.model = j.at("model").get<ModelConfig>();
        if (j.contains("enhance")) {
            const auto& e = j.at("enhance");
            reject_unknown(e, {"checkpoint", "inputs", "dump_intermediates", "debug_dir"}, "enhance");
            c.checkpoint = e.value("checkpoint", c.checkpoint);
            c.inputs = e.value("inputs", c.inputs);
            c.dump_intermediates = e.value("dump_intermediates", c.dump_intermediates);
            c.debug_dir = e.value("debug_dir", c.debug_dir);
        }
        if (j.contains("eval")) {
            const auto& e = j.at("eval");
            reject_unknown(e, {"pred_dir", "gt_dir", "pred_edge_dir", "gt_edge_dir"}, "eval");
            c.pred_dir = e.value("pred_dir", c.pred_dir);
            c.gt_dir = e.value("gt_dir", c.gt_dir);
            c.pred_edge_dir = e.value("pred_edge_dir", c.pred_edge_dir);
            c.gt_edge_dir = e.value("gt_edge_dir", c.gt_edge_dir);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid run config: ") + e.what());
    }
    return c;
}

RunConfig RunConfig::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("cannot parse config " + path.string() + ": " + e.what());
    }
    return from_json(j);
}

void RunConfig::save(const fs::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << to_json().dump(2) << '\n';
}

fs::path manifest_path_for(const fs::path& data) {
    if (data.empty()) throw UsageError("no dataset given");
    return fs::is_directory(data) ? data / "manifest.json" : data;
}

}  // namespace llie
