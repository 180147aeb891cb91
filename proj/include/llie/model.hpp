#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llie/appearance.hpp"
#include "llie/losses.hpp"
#include "llie/sgem.hpp"
#include "llie/structure.hpp"

namespace llie {

/// Ablation switches. disable_structure implies disable_gan and
/// disable_guidance; baseline_edge_net swaps the structure generator for a
/// plain U-Net edge predictor.
struct AblationFlags {
    bool disable_appearance = false;
    bool disable_structure = false;
    bool disable_guidance = false;
    bool disable_gan = false;
    bool baseline_edge_net = false;
    bool detach_structure = false;

    /// Applies implications and rejects contradictory combinations.
    void normalize();
    /// Sets one flag by its command-line name.
    void enable(const std::string& name);
    static const std::vector<std::string>& names();
};

void to_json(nlohmann::json& j, const AblationFlags& f);
void from_json(const nlohmann::json& j, AblationFlags& f);

struct ModelConfig {
    UNetConfig appearance;
    StructureConfig structure;
    UNetConfig edge_net{3, 16, {1, 2, 4}, 3, 1};
    SgemConfig sgem;
    DiscriminatorConfig discriminator;
    std::vector<int> perceptual_widths{8, 16, 32, 32};
    std::uint64_t perceptual_seed = 7;
    DistanceNorm norm = DistanceNorm::L1;

    void validate() const;
    /// Spatial multiple every network accepts.
    int size_multiple() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

struct Prediction {
    Var appearance;  // I_a (the input itself when appearance modeling is off)
    Var structure;   // I_s (undefined when structure modeling is off)
    Var enhanced;    // final output
};

/// All networks of the framework plus the frozen perceptual stack.
class Model {
public:
    Model(const ModelConfig& config, std::uint64_t seed);

    Var edge_map(const Var& image, const AblationFlags& flags) const;
    /// Composed forward pass. Records a graph when gradients are enabled.
    Prediction predict(const Var& image, const AblationFlags& flags,
                       std::vector<GuidanceTrace>* trace = nullptr) const;

    const ModelConfig& config() const { return config_; }

    AppearanceNet& appearance() { return appearance_; }
    const AppearanceNet& appearance() const { return appearance_; }
    StructureNet& structure() { return structure_; }
    const StructureNet& structure() const { return structure_; }
    AppearanceNet& edge_net() { return edge_net_; }
    const AppearanceNet& edge_net() const { return edge_net_; }
    Sgem& sgem() { return sgem_; }
    const Sgem& sgem() const { return sgem_; }
    Discriminator& discriminator() { return discriminator_; }
    const Discriminator& discriminator() const { return discriminator_; }
    const FeatureExtractor& perceptual() const { return *perceptual_; }

    /// (group name, store) for every trainable group, in a fixed order.
    std::vector<std::pair<std::string, ParamStore*>> groups();
    std::vector<std::pair<std::string, const ParamStore*>> groups() const;

private:
    ModelConfig config_;
    AppearanceNet appearance_;
    StructureNet structure_;
    AppearanceNet edge_net_;
    Sgem sgem_;
    Discriminator discriminator_;
    std::shared_ptr<const FeatureExtractor> perceptual_;
};

}  // namespace llie
