#include "llie/losses.hpp"

#include <cmath>

#include "llie/errors.hpp"
#include "llie/imaging.hpp"
#include "llie/ops.hpp"
#include "llie/params.hpp"

namespace llie {

void LossWeights::validate() const {
    for (double w : {appearance, structure, adversarial, enhancement}) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and non-negative");
    }
}

void to_json(nlohmann::json& j, const LossWeights& w) {
    j = {{"appearance", w.appearance},
         {"structure", w.structure},
         {"adversarial", w.adversarial},
         {"enhancement", w.enhancement}};
}

void from_json(const nlohmann::json& j, LossWeights& w) {
    w.appearance = j.value("appearance", w.appearance);
    w.structure = j.value("structure", w.structure);
    w.adversarial = j.value("adversarial", w.adversarial);
    w.enhancement = j.value("enhancement", w.enhancement);
}

DistanceNorm parse_norm(const std::string& name) {
    if (name == "l1") return DistanceNorm::L1;
    if (name == "l2") return DistanceNorm::L2;
    throw ConfigError("unknown distance norm '" + name + "' (expected l1 or l2)");
}

const char* norm_name(DistanceNorm n) { return n == DistanceNorm::L1 ? "l1" : "l2"; }

RandomFeatureExtractor::RandomFeatureExtractor(std::uint64_t seed, std::vector<int> widths, int in_channels) {
    if (widths.empty()) throw ConfigError("perceptual stack needs at least one stage");
    Initializer init(seed);
    int in = in_channels;
    for (int c : widths) {
        if (c < 1) throw ConfigError("perceptual stage widths must be positive");
        weights_.emplace_back(init.normal({c, in, 3, 3}, in * 9, leaky_gain(kLeakySlope)), false);
        biases_.emplace_back(Tensor({1, c, 1, 1}), false);
        in = c;
    }
}

std::vector<Var> RandomFeatureExtractor::features(const Var& image) const {
    std::vector<Var> taps;
    Var x = image;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        const int stride = (i == 0 || x.shape().h < 2 || x.shape().w < 2) ? 1 : 2;
        x = ops::leaky_relu(ops::conv2d(x, weights_[i], biases_[i], stride, 1), kLeakySlope);
        taps.push_back(x);
    }
    return taps;
}

Var pixel_distance(const Var& pred, const Var& target, DistanceNorm norm) {
    require_same_shape(pred.value(), target.value(), "reconstruction_loss");
    const Var diff = ops::sub(pred, target);
    return ops::mean(norm == DistanceNorm::L1 ? ops::abs(diff) : ops::square(diff));
}

Var reconstruction_loss(const Var& pred, const Var& target, const FeatureExtractor& phi, DistanceNorm norm) {
    Var loss = pixel_distance(pred, target, norm);
    const std::vector<Var> fp = phi.features(pred);
    const std::vector<Var> ft = phi.features(target);
    for (std::size_t k = 0; k < fp.size(); ++k) loss = ops::add(loss, pixel_distance(fp[k], ft[k], norm));
    return loss;
}

Var structure_bce(const Var& pred, const Var& target) {
    require_same_shape(pred.value(), target.value(), "structure_bce");
    return ops::bce_mean(pred, target, kBceEps);
}

Var gan_generator_loss(const Var& fake_logits) { return ops::mean(ops::softplus(ops::scale(fake_logits, -1.0))); }

Var gan_discriminator_loss(const Var& real_logits, const Var& fake_logits) {
    return ops::add(ops::mean(ops::softplus(ops::scale(real_logits, -1.0))), ops::mean(ops::softplus(fake_logits)));
}

namespace {

void require_finite_term(const Var& v, const char* term) {
    if (v.defined() && !std::isfinite(v.value().item())) {
        throw DivergenceError(term, std::string("loss term ") + term + " is not finite");
    }
}

}  // namespace

Var total_loss(const LossParts& parts, const LossWeights& weights) {
    require_finite_term(parts.appearance, "appearance");
    require_finite_term(parts.structure, "structure");
    require_finite_term(parts.adversarial, "adversarial");
    require_finite_term(parts.enhancement, "enhancement");
    Var total;
    auto accumulate = [&total](const Var& term, double w) {
        if (!term.defined()) return;
        const Var weighted = ops::scale(term, w);
        total = total.defined() ? ops::add(total, weighted) : weighted;
    };
    accumulate(parts.appearance, weights.appearance);
    accumulate(parts.structure, weights.structure);
    accumulate(parts.adversarial, weights.adversarial);
    accumulate(parts.enhancement, weights.enhancement);
    if (!total.defined()) total = ops::constant(Tensor::scalar(0.0));
    return total;
}

double total_loss(double appearance, double structure, double adversarial, double enhancement,
                  const LossWeights& weights) {
    const std::pair<double, const char*> terms[] = {
        {appearance, "appearance"}, {structure, "structure"}, {adversarial, "adversarial"}, {enhancement, "enhancement"}};
    for (const auto& [v, name] : terms) {
        if (!std::isfinite(v)) throw DivergenceError(name, std::string("loss term ") + name + " is not finite");
    }
    return weights.appearance * appearance + weights.structure * structure + weights.adversarial * adversarial +
           weights.enhancement * enhancement;
}

}  // namespace llie
