#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "llie/data.hpp"
#include "llie/model.hpp"

namespace llie {

struct AdamConfig {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First and second moments of one parameter and its own step count.
struct AdamMoments {
    Tensor m;
    Tensor v;
    std::int64_t t = 0;
};

/// Bias-corrected Adam step applied in place. Empty moments are
/// initialized to zero.
void adam_update(Tensor& param, const Tensor& grad, AdamMoments& moments, const AdamConfig& cfg);

struct TrainConfig {
    int steps = 500;
    int batch_size = 4;
    double lr_main = 2e-4;
    double lr_disc = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    LossWeights weights;
    AblationFlags ablation;
    /// Write an intermediate checkpoint every this many steps (0 = never).
    int checkpoint_every = 0;
    /// Batches the loader thread may run ahead.
    int prefetch_depth = 2;

    void validate() const;
    /// Flags after implications.
    AblationFlags flags() const;
    /// Weights with the terms of disabled components forced to zero.
    LossWeights effective_weights() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Per-step record, one CSV row. Disabled terms are 0.
struct LossLog {
    std::int64_t step = 0;
    double appearance = 0.0;
    double structure = 0.0;
    double generator = 0.0;
    double discriminator = 0.0;
    double enhancement = 0.0;
    double total = 0.0;

    static std::string csv_header();
    std::string csv_row() const;
    nlohmann::json to_json() const;
};

/// Everything needed to continue training bitwise-identically. Batch order
/// is a pure function of (seed, step), so no generator state is kept.
struct TrainState {
    TrainState(const ModelConfig& model_config, const TrainConfig& train_config);

    ModelConfig model_config;
    TrainConfig config;
    Model model;
    std::map<std::string, AdamMoments> moments;  // keyed "<group>/<param>"
    std::int64_t step = 0;
};

/// Dataset indices of the batch used at `step`: consecutive slices of a
/// per-epoch permutation seeded by (seed, epoch).
std::vector<int> batch_indices(std::uint64_t seed, std::int64_t step, int batch_size, int dataset_size);

enum class TrainPhase { Discriminator, Generators };
using PhaseObserver = std::function<void(TrainPhase)>;

/// One discriminator update on the detached structure map followed by one
/// joint update of the appearance, structure and enhancement networks.
/// Throws DivergenceError before applying any update from a non-finite loss.
LossLog train_step(TrainState& state, const PairedBatch& batch, const PhaseObserver& observer = {});

/// Single-producer single-consumer queue with a capacity bound.
template <typename T>
class BoundedQueue {
public:
    explicit BoundedQueue(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

    /// Blocks while full. Returns false once the queue is closed.
    bool push(T item) {
        std::unique_lock lock(mutex_);
        not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
        if (closed_) return false;
        items_.push_back(std::move(item));
        not_empty_.notify_one();
        return true;
    }

    /// Blocks until an item arrives or the queue is closed and drained.
    std::optional<T> pop() {
        std::unique_lock lock(mutex_);
        not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
        if (items_.empty()) return std::nullopt;
        T item = std::move(items_.front());
        items_.pop_front();
        not_full_.notify_one();
        return item;
    }

    void close() {
        std::lock_guard lock(mutex_);
        closed_ = true;
        not_empty_.notify_all();
        not_full_.notify_all();
    }

private:
    std::size_t capacity_;
    std::deque<T> items_;
    bool closed_ = false;
    std::mutex mutex_;
    std::condition_variable not_empty_, not_full_;
};

/// Loads the batches for steps [first_step, last_step) on a worker thread.
class BatchPrefetcher {
public:
    BatchPrefetcher(const Manifest& manifest, int multiple, std::uint64_t seed, int batch_size,
                    std::int64_t first_step, std::int64_t last_step, int depth);
    ~BatchPrefetcher();
    BatchPrefetcher(const BatchPrefetcher&) = delete;
    BatchPrefetcher& operator=(const BatchPrefetcher&) = delete;

    /// Next batch in step order; rethrows loader errors; nullopt at the end.
    std::optional<PairedBatch> next();

private:
    BoundedQueue<PairedBatch> queue_;
    std::exception_ptr error_;
    std::mutex error_mutex_;
    std::thread worker_;
};

struct TrainHooks {
    std::function<void(const LossLog&)> on_step;
    std::function<void(const TrainState&)> on_checkpoint;
};

/// Runs steps until state.step == until_step.
void run_training(TrainState& state, const Manifest& manifest, std::int64_t until_step, const TrainHooks& hooks = {});

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Self-describing binary container: magic, format version, JSON header
/// (configs, step, tensor table, checksum) and a raw little-endian f64 blob.
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
/// Throws CheckpointError on any inconsistency; never returns partial state.
TrainState load_checkpoint(const std::filesystem::path& path);

}  // namespace llie
