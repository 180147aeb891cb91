#include "llie/model.hpp"

#include <algorithm>

#include "llie/hash.hpp"
#include "llie/ops.hpp"

namespace llie {

const std::vector<std::string>& AblationFlags::names() {
    static const std::vector<std::string> kNames = {"disable_A",   "disable_S",         "disable_guidance",
                                                    "disable_gan", "baseline_edge_net", "detach_structure"};
    return kNames;
}

void AblationFlags::enable(const std::string& name) {
    if (name == "disable_A") {
        disable_appearance = true;
    } else if (name == "disable_S") {
        disable_structure = true;
    } else if (name == "disable_guidance") {
        disable_guidance = true;
    } else if (name == "disable_gan") {
        disable_gan = true;
    } else if (name == "baseline_edge_net") {
        baseline_edge_net = true;
    } else if (name == "detach_structure") {
        detach_structure = true;
    } else {
        throw ConfigError("unknown ablation '" + name + "'");
    }
}

void AblationFlags::normalize() {
    if (disable_structure && (baseline_edge_net || detach_structure)) {
        throw ConfigError("disable_S cannot be combined with baseline_edge_net or detach_structure");
    }
    if (disable_structure) {
        disable_gan = true;
        disable_guidance = true;
    }
}

void to_json(nlohmann::json& j, const AblationFlags& f) {
    j = {{"disable_A", f.disable_appearance}, {"disable_S", f.disable_structure},
         {"disable_guidance", f.disable_guidance}, {"disable_gan", f.disable_gan},
         {"baseline_edge_net", f.baseline_edge_net}, {"detach_structure", f.detach_structure}};
}

void from_json(const nlohmann::json& j, AblationFlags& f) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(AblationFlags::names().begin(), AblationFlags::names().end(), it.key()) ==
            AblationFlags::names().end()) {
            throw ConfigError("unknown ablation '" + it.key() + "'");
        }
    }
    f.disable_appearance = j.value("disable_A", f.disable_appearance);
    f.disable_structure = j.value("disable_S", f.disable_structure);
    f.disable_guidance = j.value("disable_guidance", f.disable_guidance);
    f.disable_gan = j.value("disable_gan", f.disable_gan);
    f.baseline_edge_net = j.value("baseline_edge_net", f.baseline_edge_net);
    f.detach_structure = j.value("detach_structure", f.detach_structure);
}

void ModelConfig::validate() const {
    appearance.validate();
    structure.validate();
    edge_net.validate();
    sgem.validate();
    discriminator.validate();
    if (appearance.in_channels != 3 || appearance.out_channels != 3) {
        throw ConfigError("appearance network must map 3 channels to 3 channels");
    }
    if (structure.in_channels != 3) throw ConfigError("structure network expects 3 input channels");
    if (edge_net.in_channels != 3 || edge_net.out_channels != 1) {
        throw ConfigError("baseline edge network must map 3 channels to 1 channel");
    }
    if (sgem.image_channels != 3) throw ConfigError("guided U-Net expects 3-channel images");
    if (perceptual_widths.empty()) throw ConfigError("perceptual stack needs at least one stage");
}

int ModelConfig::size_multiple() const {
    return std::max({appearance.size_multiple(), structure.size_multiple(), edge_net.size_multiple(),
                     sgem.size_multiple()});
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"appearance", c.appearance},
         {"structure", c.structure},
         {"edge_net", c.edge_net},
         {"sgem", c.sgem},
         {"discriminator", c.discriminator},
         {"perceptual_widths", c.perceptual_widths},
         {"perceptual_seed", c.perceptual_seed},
         {"norm", norm_name(c.norm)}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    if (j.contains("appearance")) c.appearance = j.at("appearance").get<UNetConfig>();
    if (j.contains("structure")) c.structure = j.at("structure").get<StructureConfig>();
    if (j.contains("edge_net")) c.edge_net = j.at("edge_net").get<UNetConfig>();
    if (j.contains("sgem")) c.sgem = j.at("sgem").get<SgemConfig>();
    if (j.contains("discriminator")) c.discriminator = j.at("discriminator").get<DiscriminatorConfig>();
    c.perceptual_widths = j.value("perceptual_widths", c.perceptual_widths);
    c.perceptual_seed = j.value("perceptual_seed", c.perceptual_seed);
    if (j.contains("norm")) c.norm = parse_norm(j.at("norm").get<std::string>());
}

namespace {

const ModelConfig& validated(const ModelConfig& c) {
    c.validate();
    return c;
}

}  // namespace

Model::Model(const ModelConfig& config, std::uint64_t seed)
    : config_(validated(config)),
      appearance_(config_.appearance, derive_seed(seed, "appearance")),
      structure_(config_.structure, derive_seed(seed, "structure")),
      edge_net_(config_.edge_net, derive_seed(seed, "edge_net")),
      sgem_(config_.sgem, derive_seed(seed, "sgem")),
      discriminator_(config_.discriminator, derive_seed(seed, "discriminator")),
      perceptual_(std::make_shared<RandomFeatureExtractor>(config_.perceptual_seed, config_.perceptual_widths)) {}

Var Model::edge_map(const Var& image, const AblationFlags& flags) const {
    return flags.baseline_edge_net ? edge_net_.forward(image) : structure_.forward(image);
}

Prediction Model::predict(const Var& image, const AblationFlags& raw_flags, std::vector<GuidanceTrace>* trace) const {
    AblationFlags flags = raw_flags;
    flags.normalize();
    Prediction p;
    p.appearance = flags.disable_appearance ? image : appearance_.forward(image);
    Var guide;
    if (!flags.disable_structure) {
        p.structure = edge_map(image, flags);
        guide = flags.detach_structure ? ops::detach(p.structure) : p.structure;
    } else {
        const Shape s = image.shape();
        guide = ops::constant(Tensor({s.n, 1, s.h, s.w}));
    }
    p.enhanced = sgem_.forward(p.appearance, image, guide, !flags.disable_guidance, trace);
    return p;
}

std::vector<std::pair<std::string, ParamStore*>> Model::groups() {
    return {{"appearance", &appearance_.params()},
            {"structure", &structure_.params()},
            {"edge_net", &edge_net_.params()},
            {"sgem", &sgem_.params()},
            {"discriminator", &discriminator_.params()}};
}

std::vector<std::pair<std::string, const ParamStore*>> Model::groups() const {
    return {{"appearance", &appearance_.params()},
            {"structure", &structure_.params()},
            {"edge_net", &edge_net_.params()},
            {"sgem", &sgem_.params()},
            {"discriminator", &discriminator_.params()}};
}

}  // namespace llie
