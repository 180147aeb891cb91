#include "llie/training.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "llie/hash.hpp"
#include "llie/ops.hpp"

namespace llie {

namespace fs = std::filesystem;

void adam_update(Tensor& param, const Tensor& grad, AdamMoments& mom, const AdamConfig& cfg) {
    require_same_shape(param, grad, "adam_update");
    if (mom.m.empty()) mom.m = Tensor(param.shape());
    if (mom.v.empty()) mom.v = Tensor(param.shape());
    require_same_shape(param, mom.m, "adam_update moments");
    require_same_shape(param, mom.v, "adam_update moments");
    mom.t += 1;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(mom.t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(mom.t));
    double* p = param.data();
    double* m = mom.m.data();
    double* v = mom.v.data();
    const double* g = grad.data();
    for (std::size_t i = 0; i < param.size(); ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        p[i] -= cfg.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
    }
}

void TrainConfig::validate() const {
    if (steps < 0) throw ConfigError("steps must be non-negative");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (!(lr_main > 0.0) || !(lr_disc > 0.0)) throw ConfigError("learning rates must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("Adam betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) throw ConfigError("Adam eps must be positive");
    if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be non-negative");
    if (prefetch_depth < 1) throw ConfigError("prefetch_depth must be at least 1");
    weights.validate();
    flags();
}

AblationFlags TrainConfig::flags() const {
    AblationFlags f = ablation;
    f.normalize();
    return f;
}

LossWeights TrainConfig::effective_weights() const {
    const AblationFlags f = flags();
    LossWeights w = weights;
    if (f.disable_appearance) w.appearance = 0.0;
    if (f.disable_structure) w.structure = 0.0;
    if (f.disable_gan) w.adversarial = 0.0;
    return w;
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"steps", c.steps},
         {"batch_size", c.batch_size},
         {"lr_main", c.lr_main},
         {"lr_disc", c.lr_disc},
         {"beta1", c.beta1},
         {"beta2", c.beta2},
         {"adam_eps", c.adam_eps},
         {"seed", c.seed},
         {"weights", c.weights},
         {"ablation", c.ablation},
         {"checkpoint_every", c.checkpoint_every},
         {"prefetch_depth", c.prefetch_depth}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    c.steps = j.value("steps", c.steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr_main = j.value("lr_main", c.lr_main);
    c.lr_disc = j.value("lr_disc", c.lr_disc);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.seed = j.value("seed", c.seed);
    if (j.contains("weights")) c.weights = j.at("weights").get<LossWeights>();
    if (j.contains("ablation")) c.ablation = j.at("ablation").get<AblationFlags>();
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.prefetch_depth = j.value("prefetch_depth", c.prefetch_depth);
}

std::string LossLog::csv_header() { return "step,loss_a,loss_s,loss_g,loss_d,loss_m,loss_total"; }

std::string LossLog::csv_row() const {
    std::ostringstream out;
    out << std::setprecision(17) << step << ',' << appearance << ',' << structure << ',' << generator << ','
        << discriminator << ',' << enhancement << ',' << total;
    return out.str();
}

nlohmann::json LossLog::to_json() const {
    return {{"step", step},       {"loss_a", appearance},    {"loss_s", structure}, {"loss_g", generator},
            {"loss_d", discriminator}, {"loss_m", enhancement}, {"loss_total", total}};
}

TrainState::TrainState(const ModelConfig& model_cfg, const TrainConfig& train_cfg)
    : model_config(model_cfg), config(train_cfg), model(model_cfg, train_cfg.seed) {
    config.validate();
}

std::vector<int> batch_indices(std::uint64_t seed, std::int64_t step, int batch_size, int dataset_size) {
    if (dataset_size < 1 || batch_size < 1 || step < 0) throw UsageError("invalid batch schedule request");
    std::vector<int> out;
    std::int64_t cached_epoch = -1;
    std::vector<int> perm(dataset_size);
    for (int k = 0; k < batch_size; ++k) {
        const std::int64_t pos = step * batch_size + k;
        const std::int64_t epoch = pos / dataset_size;
        if (epoch != cached_epoch) {
            std::iota(perm.begin(), perm.end(), 0);
            std::mt19937_64 rng(derive_seed(seed, "epoch/" + std::to_string(epoch)));
            for (int i = dataset_size - 1; i > 0; --i) {
                const auto j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
                std::swap(perm[i], perm[j]);
            }
            cached_epoch = epoch;
        }
        out.push_back(perm[pos % dataset_size]);
    }
    return out;
}

namespace {

void update_group(TrainState& state, const std::string& group, ParamStore& store, const AdamConfig& cfg) {
    for (auto& [name, param] : store.entries()) {
        Var handle = param;
        if (handle.grad().empty()) continue;
        adam_update(handle.mutable_value(), handle.grad(), state.moments[group + "/" + name], cfg);
    }
}

double finite_item(const Var& v, const char* term) {
    const double x = v.value().item();
    if (!std::isfinite(x)) throw DivergenceError(term, std::string("loss term ") + term + " is not finite");
    return x;
}

}  // namespace

LossLog train_step(TrainState& state, const PairedBatch& batch, const PhaseObserver& observer) {
    const AblationFlags flags = state.config.flags();
    const LossWeights weights = state.config.effective_weights();
    Model& model = state.model;
    const AdamConfig main_cfg{state.config.lr_main, state.config.beta1, state.config.beta2, state.config.adam_eps};
    const AdamConfig disc_cfg{state.config.lr_disc, state.config.beta1, state.config.beta2, state.config.adam_eps};

    const bool train_structure = !flags.disable_structure && !flags.baseline_edge_net;
    const bool train_edge_net = !flags.disable_structure && flags.baseline_edge_net;
    std::vector<std::pair<std::string, ParamStore*>> generators;
    for (auto& [group, store] : model.groups()) {
        bool active = group == "sgem" || (group == "appearance" && !flags.disable_appearance) ||
                      (group == "structure" && train_structure) || (group == "edge_net" && train_edge_net);
        store->zero_grad();
        store->set_requires_grad(active);
        if (active) generators.emplace_back(group, store);
    }
    ParamStore& disc = model.discriminator().params();

    const Var image = ops::constant(batch.low);
    const Var target = ops::constant(batch.high);
    const Var edges = ops::constant(batch.edge);
    const Prediction pred = model.predict(image, flags);

    LossLog log;
    log.step = state.step + 1;

    if (!flags.disable_gan) {
        disc.set_requires_grad(true);
        const Var real = model.discriminator().forward(edges);
        const Var fake = model.discriminator().forward(ops::detach(pred.structure));
        const Var loss_d = gan_discriminator_loss(real, fake);
        log.discriminator = finite_item(loss_d, "discriminator");
        backward(loss_d);
        update_group(state, "discriminator", disc, disc_cfg);
        disc.zero_grad();
        disc.set_requires_grad(false);
    }
    if (observer) observer(TrainPhase::Discriminator);

    LossParts parts;
    const FeatureExtractor& phi = model.perceptual();
    const DistanceNorm norm = state.model_config.norm;
    if (!flags.disable_appearance) parts.appearance = reconstruction_loss(pred.appearance, target, phi, norm);
    if (!flags.disable_structure) parts.structure = structure_bce(pred.structure, edges);
    if (!flags.disable_gan) parts.adversarial = gan_generator_loss(model.discriminator().forward(pred.structure));
    parts.enhancement = reconstruction_loss(pred.enhanced, target, phi, norm);
    const Var total = total_loss(parts, weights);

    if (parts.appearance.defined()) log.appearance = parts.appearance.value().item();
    if (parts.structure.defined()) log.structure = parts.structure.value().item();
    if (parts.adversarial.defined()) log.generator = parts.adversarial.value().item();
    log.enhancement = parts.enhancement.value().item();
    log.total = total.value().item();

    backward(total);
    for (auto& [group, store] : generators) update_group(state, group, *store, main_cfg);
    for (auto& [group, store] : model.groups()) {
        store->zero_grad();
        store->set_requires_grad(true);
    }
    state.step += 1;
    if (observer) observer(TrainPhase::Generators);
    return log;
}

BatchPrefetcher::BatchPrefetcher(const Manifest& manifest, int multiple, std::uint64_t seed, int batch_size,
                                 std::int64_t first_step, std::int64_t last_step, int depth)
    : queue_(static_cast<std::size_t>(depth)) {
    worker_ = std::thread([this, manifest, multiple, seed, batch_size, first_step, last_step] {
        try {
            for (std::int64_t s = first_step; s < last_step; ++s) {
                std::vector<std::string> ids;
                for (int i : batch_indices(seed, s, batch_size, static_cast<int>(manifest.ids.size()))) {
                    ids.push_back(manifest.ids[i]);
                }
                if (!queue_.push(load_batch(manifest, ids, multiple))) return;
            }
        } catch (...) {
            std::lock_guard lock(error_mutex_);
            error_ = std::current_exception();
        }
        queue_.close();
    });
}

BatchPrefetcher::~BatchPrefetcher() {
    queue_.close();
    if (worker_.joinable()) worker_.join();
}

std::optional<PairedBatch> BatchPrefetcher::next() {
    std::optional<PairedBatch> batch = queue_.pop();
    if (!batch) {
        std::lock_guard lock(error_mutex_);
        if (error_) std::rethrow_exception(error_);
    }
    return batch;
}

void run_training(TrainState& state, const Manifest& manifest, std::int64_t until_step, const TrainHooks& hooks) {
    if (manifest.ids.empty()) throw UsageError("training manifest lists no samples");
    if (until_step <= state.step) return;
    BatchPrefetcher loader(manifest, state.model_config.size_multiple(), state.config.seed, state.config.batch_size,
                           state.step, until_step, state.config.prefetch_depth);
    while (state.step < until_step) {
        std::optional<PairedBatch> batch = loader.next();
        if (!batch) throw CorruptStateError("batch loader stopped before the last step");
        const LossLog log = train_step(state, *batch);
        if (hooks.on_step) hooks.on_step(log);
        const int every = state.config.checkpoint_every;
        if (every > 0 && state.step % every == 0 && state.step < until_step && hooks.on_checkpoint) {
            hooks.on_checkpoint(state);
        }
    }
}

// Checkpoint container --------------------------------------------------------

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs are little-endian");

constexpr char kMagic[8] = {'L', 'L', 'I', 'E', 'C', 'K', 'P', 'T'};

struct BlobWriter {
    std::vector<double> blob;
    nlohmann::json table = nlohmann::json::array();

    void add(const std::string& name, const Tensor& t) {
        const Shape s = t.shape();
        table.push_back({{"name", name},
                         {"dtype", "f64"},
                         {"shape", {s.n, s.c, s.h, s.w}},
                         {"offset", blob.size()},
                         {"count", t.size()}});
        blob.insert(blob.end(), t.values().begin(), t.values().end());
    }
};

}  // namespace

void save_checkpoint(const TrainState& state, const fs::path& path) {
    BlobWriter writer;
    for (const auto& [group, store] : state.model.groups()) {
        for (const auto& [name, param] : store->entries()) writer.add("param/" + group + "/" + name, param.value());
    }
    nlohmann::json adam_steps = nlohmann::json::object();
    for (const auto& [key, mom] : state.moments) {
        writer.add("adam_m/" + key, mom.m);
        writer.add("adam_v/" + key, mom.v);
        adam_steps[key] = mom.t;
    }
    const std::size_t blob_bytes = writer.blob.size() * sizeof(double);
    const nlohmann::json header = {{"format", "llie-checkpoint"},
                                   {"step", state.step},
                                   {"seed", state.config.seed},
                                   {"model", state.model_config},
                                   {"train", state.config},
                                   {"tensors", writer.table},
                                   {"adam_steps", adam_steps},
                                   {"blob_bytes", blob_bytes},
                                   {"checksum", hex64(fnv1a(writer.blob.data(), blob_bytes))}};
    const std::string text = header.dump();
    const std::uint32_t version = kCheckpointVersion;
    const std::uint64_t header_len = text.size();

    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write checkpoint " + path.string());
        out.write(kMagic, sizeof kMagic);
        out.write(reinterpret_cast<const char*>(&version), sizeof version);
        out.write(reinterpret_cast<const char*>(&header_len), sizeof header_len);
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        out.write(reinterpret_cast<const char*>(writer.blob.data()), static_cast<std::streamsize>(blob_bytes));
        if (!out) throw IoError("failed writing checkpoint " + path.string());
    }
    fs::rename(tmp, path);
}

TrainState load_checkpoint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::size_t prefix = sizeof kMagic + sizeof(std::uint32_t) + sizeof(std::uint64_t);
    if (bytes.size() < prefix || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
        throw CheckpointError(path.string() + " is not a checkpoint file");
    }
    std::uint32_t version = 0;
    std::uint64_t header_len = 0;
    std::memcpy(&version, bytes.data() + sizeof kMagic, sizeof version);
    std::memcpy(&header_len, bytes.data() + sizeof kMagic + sizeof version, sizeof header_len);
    if (version != kCheckpointVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                              std::to_string(kCheckpointVersion) + ")");
    }
    if (header_len > bytes.size() - prefix) throw CheckpointError("checkpoint header is truncated");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(prefix, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
    }
    const char* blob_ptr = bytes.data() + prefix + header_len;
    const std::size_t blob_bytes = bytes.size() - prefix - header_len;

    try {
        if (header.at("blob_bytes").get<std::size_t>() != blob_bytes || blob_bytes % sizeof(double) != 0) {
            throw CheckpointError("checkpoint payload size does not match its header");
        }
        std::vector<double> blob(blob_bytes / sizeof(double));
        std::memcpy(blob.data(), blob_ptr, blob_bytes);
        if (hex64(fnv1a(blob.data(), blob_bytes)) != header.at("checksum").get<std::string>()) {
            throw CheckpointError("checkpoint checksum mismatch");
        }

        std::map<std::string, Tensor> tensors;
        for (const auto& entry : header.at("tensors")) {
            if (entry.at("dtype").get<std::string>() != "f64") throw CheckpointError("unsupported tensor dtype");
            const auto dims = entry.at("shape").get<std::vector<int>>();
            if (dims.size() != 4) throw CheckpointError("tensor shapes must have four dims");
            const Shape shape{dims[0], dims[1], dims[2], dims[3]};
            const auto offset = entry.at("offset").get<std::size_t>();
            const auto count = entry.at("count").get<std::size_t>();
            if (count != shape.numel() || offset > blob.size() || count > blob.size() - offset) {
                throw CheckpointError("tensor table entry out of range");
            }
            tensors[entry.at("name").get<std::string>()] =
                Tensor(shape, std::vector<double>(blob.begin() + offset, blob.begin() + offset + count));
        }

        TrainState state(header.at("model").get<ModelConfig>(), header.at("train").get<TrainConfig>());
        state.step = header.at("step").get<std::int64_t>();
        for (auto& [group, store] : state.model.groups()) {
            for (auto& [name, param] : store->entries()) {
                auto it = tensors.find("param/" + group + "/" + name);
                if (it == tensors.end()) throw CheckpointError("checkpoint lacks parameter " + group + "/" + name);
                if (it->second.shape() != param.shape()) {
                    throw CheckpointError("shape mismatch for parameter " + group + "/" + name);
                }
                Var handle = param;
                handle.mutable_value() = std::move(it->second);
            }
        }
        for (const auto& [key, t] : header.at("adam_steps").items()) {
            AdamMoments mom;
            auto m = tensors.find("adam_m/" + key);
            auto v = tensors.find("adam_v/" + key);
            if (m == tensors.end() || v == tensors.end()) throw CheckpointError("checkpoint lacks moments of " + key);
            mom.m = std::move(m->second);
            mom.v = std::move(v->second);
            mom.t = t.get<std::int64_t>();
            state.moments.emplace(key, std::move(mom));
        }
        return state;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw CheckpointError(std::string("checkpoint holds an invalid configuration: ") + e.what());
    }
}

}  // namespace llie
