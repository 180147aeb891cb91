#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llie/autograd.hpp"

namespace llie {

struct LossWeights {
    double appearance = 1.0;
    double structure = 0.1;
    double adversarial = 0.01;
    double enhancement = 1.0;

    void validate() const;
};

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

enum class DistanceNorm { L1, L2 };

DistanceNorm parse_norm(const std::string& name);
const char* norm_name(DistanceNorm n);

/// Feature stack behind the perceptual term. Implementations must be
/// immutable after construction.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual std::vector<Var> features(const Var& image) const = 0;
};

/// Frozen, seeded random conv stack: stage 0 keeps resolution, later stages
/// halve it. One tap after each stage.
class RandomFeatureExtractor final : public FeatureExtractor {
public:
    explicit RandomFeatureExtractor(std::uint64_t seed, std::vector<int> widths = {8, 16, 32, 32},
                                    int in_channels = 3);
    std::vector<Var> features(const Var& image) const override;
    std::size_t taps() const { return weights_.size(); }
    const Tensor& weight(std::size_t stage) const { return weights_.at(stage).value(); }
    const Tensor& bias(std::size_t stage) const { return biases_.at(stage).value(); }

private:
    std::vector<Var> weights_;
    std::vector<Var> biases_;
};

/// mean |pred - target| plus the same distance over every feature tap.
Var reconstruction_loss(const Var& pred, const Var& target, const FeatureExtractor& phi,
                        DistanceNorm norm = DistanceNorm::L1);

/// Pixel component only.
Var pixel_distance(const Var& pred, const Var& target, DistanceNorm norm = DistanceNorm::L1);

/// Mean binary cross-entropy against a binary target, predictions clamped
/// to [1e-7, 1 - 1e-7].
Var structure_bce(const Var& pred, const Var& target);

/// mean softplus(-fake).
Var gan_generator_loss(const Var& fake_logits);
/// mean softplus(-real) + mean softplus(fake).
Var gan_discriminator_loss(const Var& real_logits, const Var& fake_logits);

/// Individual terms of the main objective. Undefined terms count as zero.
struct LossParts {
    Var appearance;
    Var structure;
    Var adversarial;
    Var enhancement;
};

/// Weighted sum. Throws DivergenceError naming the first non-finite term.
Var total_loss(const LossParts& parts, const LossWeights& weights);
double total_loss(double appearance, double structure, double adversarial, double enhancement,
                  const LossWeights& weights);

}  // namespace llie
