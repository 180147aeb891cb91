#include "llie/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "llie/autograd.hpp"
#include "llie/errors.hpp"
#include "llie/image_io.hpp"
#include "llie/imaging.hpp"
#include "llie/ops.hpp"
#include "llie/plot.hpp"

namespace llie::cli {

namespace fs = std::filesystem;

namespace {

fs::path require_out_dir(const RunConfig& cfg) {
    if (cfg.out_dir.empty()) throw UsageError("--out is required");
    const fs::path dir(cfg.out_dir);
    fs::create_directories(dir);
    return dir;
}

void archive(const RunConfig& cfg, const fs::path& dir) { cfg.save(dir / "effective_config.json"); }

void write_json(const fs::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

/// PNG files of a directory keyed by stem, sorted.
std::map<std::string, fs::path> list_pngs(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw UsageError(dir.string() + " is not a directory");
    std::map<std::string, fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") {
            files.emplace(entry.path().stem().string(), entry.path());
        }
    }
    return files;
}

std::string join(const std::vector<std::string>& items) {
    std::string s;
    for (const std::string& item : items) s += (s.empty() ? "" : ", ") + item;
    return s;
}

}  // namespace

// make-data --------------------------------------------------------------------

void cmd_make_data(const RunConfig& cfg, std::ostream& out) {
    cfg.validate();
    const fs::path out_dir = require_out_dir(cfg);
    fs::path source(cfg.source_dir);
    if (source.empty()) {
        if (cfg.synthetic_count == 0) throw UsageError("make-data needs --src or --synthetic");
        source = out_dir / "source";
        write_synthetic_sources(source, cfg.synthetic_count, cfg.synthetic_height, cfg.synthetic_width,
                                cfg.synthetic_seed);
    } else if (cfg.synthetic_count > 0) {
        throw UsageError("--src and --synthetic are mutually exclusive");
    }
    const Manifest manifest = build_dataset(source, out_dir, cfg.degrade, cfg.canny);
    archive(cfg, out_dir);
    out << "manifest: " << (out_dir / "manifest.json").string() << "\n"
        << "count: " << manifest.ids.size() << "\n"
        << "skipped: " << manifest.skipped.size() << "\n"
        << "config_hash: " << manifest.config_hash << "\n";
}

// train ------------------------------------------------------------------------

namespace {

/// Loss CSV that survives a resume: rows past the resume point are dropped.
class LossCsv {
public:
    LossCsv(const fs::path& path, std::int64_t keep_through) {
        std::vector<LossLog> kept;
        if (keep_through > 0 && fs::exists(path)) {
            for (const LossLog& l : read_loss_csv(path)) {
                if (l.step <= keep_through) kept.push_back(l);
            }
        }
        out_.open(path, std::ios::trunc);
        if (!out_) throw IoError("cannot write " + path.string());
        out_ << LossLog::csv_header() << '\n';
        for (const LossLog& l : kept) out_ << l.csv_row() << '\n';
        out_.flush();
    }

    void append(const LossLog& l) {
        out_ << l.csv_row() << '\n';
        out_.flush();
        if (!out_) throw IoError("loss CSV write failed");
    }

private:
    std::ofstream out_;
};

fs::path step_checkpoint_path(const fs::path& out_dir, std::int64_t step) {
    char name[32];
    std::snprintf(name, sizeof(name), "step_%06lld.ckpt", static_cast<long long>(step));
    return out_dir / "checkpoints" / name;
}

}  // namespace

void cmd_train(const RunConfig& cfg_in, std::ostream& out) {
    RunConfig cfg = cfg_in;
    cfg.validate();
    const fs::path out_dir = require_out_dir(cfg);
    const Manifest manifest = Manifest::load(manifest_path_for(cfg.data));

    std::optional<TrainState> loaded;
    if (!cfg.resume.empty()) {
        loaded.emplace(load_checkpoint(cfg.resume));
        // The checkpoint owns the model and optimizer settings; only the
        // step target comes from the command.
        const int target = cfg.train.steps;
        cfg.model = loaded->model_config;
        cfg.train = loaded->config;
        cfg.train.steps = target;
        loaded->config.steps = target;
        if (target < loaded->step) {
            throw UsageError("--steps " + std::to_string(target) + " is behind the checkpoint step " +
                             std::to_string(loaded->step));
        }
    }
    TrainState state = loaded ? std::move(*loaded) : TrainState(cfg.model, cfg.train);
    archive(cfg, out_dir);

    LossCsv csv(out_dir / "loss.csv", state.step);
    std::optional<LossLog> last_finite;
    TrainHooks hooks;
    hooks.on_step = [&](const LossLog& l) {
        csv.append(l);
        last_finite = l;
        if (cfg.log_every > 0 && (l.step % cfg.log_every == 0 || l.step == 1)) {
            out << "step " << l.step << " total " << l.total << " a " << l.appearance << " s " << l.structure
                << " g " << l.generator << " d " << l.discriminator << " m " << l.enhancement << "\n";
        }
    };
    hooks.on_checkpoint = [&](const TrainState& s) {
        fs::create_directories(out_dir / "checkpoints");
        save_checkpoint(s, step_checkpoint_path(out_dir, s.step));
    };

    try {
        run_training(state, manifest, cfg.train.steps, hooks);
    } catch (const DivergenceError& e) {
        write_json(out_dir / "divergence.json",
                   {{"term", e.term()},
                    {"message", e.what()},
                    {"step", state.step + 1},
                    {"last_finite", last_finite ? last_finite->to_json() : nlohmann::json(nullptr)}});
        throw;
    }
    save_checkpoint(state, out_dir / "final.ckpt");
    plot_loss_curves(read_loss_csv(out_dir / "loss.csv"), out_dir / "loss_curve.png");
    out << "trained to step " << state.step << "\n"
        << "checkpoint: " << (out_dir / "final.ckpt").string() << "\n";
    if (last_finite) out << "final total: " << last_finite->total << "\n";
}

// enhance ----------------------------------------------------------------------

namespace {

std::vector<std::pair<std::string, fs::path>> collect_inputs(const std::vector<std::string>& inputs) {
    std::vector<std::pair<std::string, fs::path>> files;
    for (const std::string& in : inputs) {
        const fs::path p(in);
        if (fs::is_directory(p)) {
            for (const auto& [stem, path] : list_pngs(p)) files.emplace_back(stem, path);
        } else if (fs::is_regular_file(p)) {
            files.emplace_back(p.stem().string(), p);
        } else {
            throw IoError("input " + in + " does not exist");
        }
    }
    if (files.empty()) throw UsageError("no input images");
    std::set<std::string> seen;
    for (const auto& f : files) {
        if (!seen.insert(f.first).second) throw UsageError("duplicate input id '" + f.first + "'");
    }
    return files;
}

/// Channel mean of sample 0, stretched to [0, 1] for viewing.
Tensor channel_mean_view(const Tensor& f) {
    Tensor m({1, 1, f.h(), f.w()});
    const std::size_t hw = static_cast<std::size_t>(f.h()) * f.w();
    const auto src = f.sample(0);
    auto& dst = m.values();
    for (int c = 0; c < f.c(); ++c) {
        for (std::size_t i = 0; i < hw; ++i) dst[i] += src[c * hw + i] / f.c();
    }
    const auto [lo, hi] = std::minmax_element(dst.begin(), dst.end());
    const double low = *lo, span = *hi - *lo;
    for (double& v : dst) v = span > 0.0 ? (v - low) / span : 0.0;
    return m;
}

nlohmann::json summary(const std::vector<double>& v) {
    double sum = 0.0, sq = 0.0;
    for (double x : v) sum += x;
    const double mean = sum / static_cast<double>(v.size());
    for (double x : v) sq += (x - mean) * (x - mean);
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return {{"mean", mean}, {"std", std::sqrt(sq / static_cast<double>(v.size()))}, {"min", *lo}, {"max", *hi}};
}

/// Mean Shannon entropy (nats) of the per-location kernels; each kernel is
/// a contiguous group of `taps` channels.
double kernel_entropy(const Tensor& kernels, int taps) {
    const std::size_t hw = static_cast<std::size_t>(kernels.h()) * kernels.w();
    const int groups = kernels.c() / taps;
    double total = 0.0;
    for (int n = 0; n < kernels.n(); ++n) {
        const auto k = kernels.sample(n);
        for (int g = 0; g < groups; ++g) {
            for (std::size_t i = 0; i < hw; ++i) {
                for (int t = 0; t < taps; ++t) {
                    const double p = k[(static_cast<std::size_t>(g) * taps + t) * hw + i];
                    if (p > 0.0) total -= p * std::log(p);
                }
            }
        }
    }
    return total / (static_cast<double>(kernels.n()) * groups * hw);
}

void write_debug(const Model& model, const AblationFlags& flags, const Var& image, const Prediction& pred,
                 const std::vector<GuidanceTrace>& trace, const fs::path& dir, const std::string& id) {
    fs::create_directories(dir);
    if (!flags.disable_structure && !flags.baseline_edge_net) {
        const FeaturePyramid pyramid = model.structure().safe_extract(image);
        for (std::size_t l = 0; l < pyramid.levels.size(); ++l) {
            write_png(dir / (id + "_pyramid_l" + std::to_string(l) + ".png"),
                      channel_mean_view(pyramid.levels[l].value()));
        }
    }
    if (pred.structure.defined()) {
        Tensor binary = pred.structure.value();
        for (double& v : binary.values()) v = v >= 0.5 ? 1.0 : 0.0;
        write_png(dir / (id + "_structure_binary.png"), binary);
    }
    nlohmann::json layers = nlohmann::json::array();
    const int k = model.config().sgem.kernel_size;
    for (std::size_t j = 0; j < trace.size(); ++j) {
        layers.push_back({{"layer", j},
                          {"level", model.config().sgem.layer_level(static_cast<int>(j))},
                          {"alpha", summary(trace[j].alpha.values())},
                          {"gamma", summary(trace[j].gamma.values())},
                          {"kernel_entropy", kernel_entropy(trace[j].kernels, k * k)},
                          {"kernel_entropy_uniform", std::log(static_cast<double>(k * k))}});
    }
    write_json(dir / (id + "_guidance.json"), {{"id", id}, {"layers", layers}});
}

}  // namespace

void cmd_enhance(const RunConfig& cfg, std::ostream& out) {
    if (cfg.checkpoint.empty()) throw UsageError("--checkpoint is required");
    const fs::path out_dir = require_out_dir(cfg);
    const auto inputs = collect_inputs(cfg.inputs);
    const TrainState state = load_checkpoint(cfg.checkpoint);
    const AblationFlags flags = state.config.flags();
    const int multiple = state.model_config.size_multiple();
    archive(cfg, out_dir);

    NoGradGuard no_grad;
    for (const auto& [id, path] : inputs) {
        PadRecord pad;
        const Var image = ops::constant(pad_to_multiple(to_rgb(read_png(path)), multiple, &pad));
        std::vector<GuidanceTrace> trace;
        const bool want_trace = !cfg.debug_dir.empty();
        const Prediction pred = state.model.predict(image, flags, want_trace ? &trace : nullptr);
        write_png(out_dir / (id + ".png"), unpad(pred.enhanced.value(), pad));
        if (cfg.dump_intermediates) {
            write_png(out_dir / (id + "_appearance.png"), unpad(pred.appearance.value(), pad));
            if (pred.structure.defined()) {
                write_png(out_dir / (id + "_structure.png"), unpad(pred.structure.value(), pad));
            }
        }
        if (want_trace) write_debug(state.model, flags, image, pred, trace, cfg.debug_dir, id);
    }
    out << "enhanced " << inputs.size() << " image(s) into " << out_dir.string() << "\n";
}

// eval -------------------------------------------------------------------------

namespace {

void require_same_ids(const std::map<std::string, fs::path>& pred, const std::map<std::string, fs::path>& gt,
                      const std::string& what) {
    std::vector<std::string> missing_pred, missing_gt;
    for (const auto& [id, p] : gt) {
        if (!pred.count(id)) missing_pred.push_back(id);
    }
    for (const auto& [id, p] : pred) {
        if (!gt.count(id)) missing_gt.push_back(id);
    }
    if (missing_pred.empty() && missing_gt.empty()) return;
    std::string msg = what + " id sets differ;";
    if (!missing_pred.empty()) msg += " missing from predictions: " + join(missing_pred) + ";";
    if (!missing_gt.empty()) msg += " missing from ground truth: " + join(missing_gt) + ";";
    throw UsageError(msg);
}

Tensor read_edge(const fs::path& path) {
    const Tensor t = read_png(path);
    return t.c() == 1 ? t : luminance(t);
}

}  // namespace

void cmd_eval(const RunConfig& cfg, std::ostream& out) {
    if (cfg.pred_dir.empty() || cfg.gt_dir.empty()) throw UsageError("--pred and --gt are required");
    if (cfg.pred_edge_dir.empty() != cfg.gt_edge_dir.empty()) {
        throw UsageError("--pred-edges and --gt-edges must be given together");
    }
    const fs::path out_dir = require_out_dir(cfg);
    auto pred = list_pngs(cfg.pred_dir);
    // Intermediates dumped next to their enhanced image are not predictions.
    std::erase_if(pred, [&](const auto& e) {
        for (const std::string suffix : {"_appearance", "_structure"}) {
            const std::string& id = e.first;
            if (id.ends_with(suffix) && pred.count(id.substr(0, id.size() - suffix.size()))) return true;
        }
        return false;
    });
    const auto gt = list_pngs(cfg.gt_dir);
    require_same_ids(pred, gt, "image");

    const bool edges = !cfg.gt_edge_dir.empty();
    std::map<std::string, fs::path> pred_edges;
    if (edges) {
        // Predicted maps may carry the _structure suffix written by enhance.
        const std::string suffix = "_structure";
        for (const auto& [name, path] : list_pngs(cfg.pred_edge_dir)) {
            std::string stem = name;
            if (stem.size() > suffix.size() && stem.ends_with(suffix)) stem.resize(stem.size() - suffix.size());
            if (gt.count(stem)) pred_edges[stem] = path;
        }
        require_same_ids(pred_edges, gt, "edge map");
        std::map<std::string, fs::path> gt_edges = list_pngs(cfg.gt_edge_dir);
        std::erase_if(gt_edges, [&](const auto& e) { return !gt.count(e.first); });
        require_same_ids(pred_edges, gt_edges, "edge map");
    }

    MetricReport report;
    for (const auto& [id, gt_path] : gt) {
        Tensor a = read_png(pred.at(id)), b = read_png(gt_path);
        if (a.c() != b.c()) {
            a = to_rgb(a);
            b = to_rgb(b);
        }
        if (a.shape() != b.shape()) throw UsageError("image '" + id + "' differs in size from its ground truth");
        report.ids.push_back(id);
        report.psnr.push_back(psnr(a, b));
        report.ssim.push_back(ssim(a, b));
        if (edges) {
            const Tensor pe = read_edge(pred_edges.at(id));
            const Tensor ge = read_edge(fs::path(cfg.gt_edge_dir) / (id + ".png"));
            if (pe.shape() != ge.shape()) throw UsageError("edge map '" + id + "' differs in size");
            const EdgeScores s = edge_metrics(pe, ge);
            report.edge_ce.push_back(s.ce);
            report.edge_l2.push_back(s.l2);
        }
    }
    archive(cfg, out_dir);
    write_json(out_dir / "report.json", report.to_json());
    std::ofstream csv(out_dir / "report.csv");
    if (!csv) throw IoError("cannot write report.csv");
    csv << report.to_csv();
    out << "images: " << report.ids.size() << "\n"
        << "mean psnr: " << report.mean_psnr() << "\n"
        << "mean ssim: " << report.mean_ssim() << "\n";
    if (edges) out << "mean edge ce: " << report.mean_edge_ce() << "\nmean edge l2: " << report.mean_edge_l2() << "\n";
}

// argument parsing ---------------------------------------------------------------

namespace {

struct Flags {
    std::string config, out;
    std::uint64_t seed = 0;
    // make-data
    std::string src;
    int synthetic = 0, height = 0, width = 0;
    // train
    std::string data, resume;
    int steps = 0, batch = 0, checkpoint_every = 0, log_every = 0;
    double lr = 0.0;
    std::vector<std::string> ablations;
    // enhance
    std::string checkpoint, debug_dir;
    std::vector<std::string> inputs;
    bool dump = false;
    // eval
    std::string pred, gt, pred_edges, gt_edges;
};

bool given(const CLI::App* app, const std::string& name) { return app->count(name) > 0; }

RunConfig resolve(const CLI::App* sub, const Flags& f) {
    RunConfig cfg = f.config.empty() ? RunConfig{} : RunConfig::load(f.config);
    cfg.mode = sub->get_name();
    if (given(sub, "--out")) cfg.out_dir = f.out;
    if (cfg.mode == "make-data") {
        if (given(sub, "--src")) cfg.source_dir = f.src;
        if (given(sub, "--synthetic")) cfg.synthetic_count = f.synthetic;
        if (given(sub, "--height")) cfg.synthetic_height = f.height;
        if (given(sub, "--width")) cfg.synthetic_width = f.width;
        if (given(sub, "--seed")) {
            cfg.degrade.seed = f.seed;
            cfg.synthetic_seed = f.seed;
        }
    } else if (cfg.mode == "train") {
        if (given(sub, "--data")) cfg.data = f.data;
        if (given(sub, "--resume")) cfg.resume = f.resume;
        if (given(sub, "--seed")) cfg.train.seed = f.seed;
        if (given(sub, "--steps")) cfg.train.steps = f.steps;
        if (given(sub, "--batch-size")) cfg.train.batch_size = f.batch;
        if (given(sub, "--lr")) cfg.train.lr_main = f.lr;
        if (given(sub, "--checkpoint-every")) cfg.train.checkpoint_every = f.checkpoint_every;
        if (given(sub, "--log-every")) cfg.log_every = f.log_every;
        for (const std::string& name : f.ablations) cfg.train.ablation.enable(name);
        cfg.train.ablation.normalize();
    } else if (cfg.mode == "enhance") {
        if (given(sub, "--checkpoint")) cfg.checkpoint = f.checkpoint;
        if (given(sub, "--input")) cfg.inputs = f.inputs;
        if (given(sub, "--dump-intermediates")) cfg.dump_intermediates = f.dump;
        if (given(sub, "--debug-dir")) cfg.debug_dir = f.debug_dir;
    } else {
        if (given(sub, "--pred")) cfg.pred_dir = f.pred;
        if (given(sub, "--gt")) cfg.gt_dir = f.gt;
        if (given(sub, "--pred-edges")) cfg.pred_edge_dir = f.pred_edges;
        if (given(sub, "--gt-edges")) cfg.gt_edge_dir = f.gt_edges;
    }
    return cfg;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Structure-guided low-light image enhancement"};
    app.require_subcommand(1);
    Flags f;
    auto common = [&f](CLI::App* sub) {
        sub->add_option("--config", f.config, "JSON run config; flags override its values");
        sub->add_option("--out", f.out, "Output directory");
    };

    CLI::App* make_data = app.add_subcommand("make-data", "Build a paired low/normal/edge dataset");
    common(make_data);
    make_data->add_option("--src", f.src, "Directory of normal-light PNGs");
    make_data->add_option("--synthetic", f.synthetic, "Generate this many synthetic scenes instead")
        ->check(CLI::PositiveNumber);
    make_data->add_option("--height", f.height, "Synthetic scene height")->check(CLI::PositiveNumber);
    make_data->add_option("--width", f.width, "Synthetic scene width")->check(CLI::PositiveNumber);
    make_data->add_option("--seed", f.seed, "Noise and scene seed");

    CLI::App* train = app.add_subcommand("train", "Train all networks end to end");
    common(train);
    train->add_option("--data", f.data, "Dataset directory or manifest.json");
    train->add_option("--resume", f.resume, "Checkpoint to continue from");
    train->add_option("--seed", f.seed, "Initialization and batch-order seed");
    train->add_option("--steps", f.steps, "Total optimizer steps");
    train->add_option("--batch-size", f.batch, "Images per step");
    train->add_option("--lr", f.lr, "Learning rate of the enhancement networks");
    train->add_option("--checkpoint-every", f.checkpoint_every, "Intermediate checkpoint period (0 = off)");
    train->add_option("--log-every", f.log_every, "Progress line period (0 = quiet)");
    train->add_option("--ablation", f.ablations, "Ablation switch; repeatable")
        ->check(CLI::IsMember(AblationFlags::names()));

    CLI::App* enhance = app.add_subcommand("enhance", "Enhance images with a trained checkpoint");
    common(enhance);
    enhance->add_option("--checkpoint", f.checkpoint, "Checkpoint file");
    enhance->add_option("--input", f.inputs, "Input PNG files or directories; repeatable");
    enhance->add_flag("--dump-intermediates", f.dump, "Also write the appearance and structure maps");
    enhance->add_option("--debug-dir", f.debug_dir, "Write feature pyramids and guidance statistics here");

    CLI::App* eval = app.add_subcommand("eval", "Score predictions against ground truth");
    common(eval);
    eval->add_option("--pred", f.pred, "Directory of predicted images");
    eval->add_option("--gt", f.gt, "Directory of ground-truth images");
    eval->add_option("--pred-edges", f.pred_edges, "Directory of predicted edge maps");
    eval->add_option("--gt-edges", f.gt_edges, "Directory of ground-truth edge maps");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    const CLI::App* sub = app.get_subcommands().front();
    try {
        const RunConfig cfg = resolve(sub, f);
        if (cfg.mode == "make-data") {
            cmd_make_data(cfg, out);
        } else if (cfg.mode == "train") {
            cmd_train(cfg, out);
        } else if (cfg.mode == "enhance") {
            cmd_enhance(cfg, out);
        } else {
            cmd_eval(cfg, out);
        }
        return kExitOk;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DivergenceError& e) {
        err << "training diverged in " << e.term() << ": " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

int run(int argc, const char* const* argv) { return run(argc, argv, std::cout, std::cerr); }

}  // namespace llie::cli
