#pragma once

// JSON conversions for the plain-data config structs. Kept header-only so
// every translation unit that round-trips configs (checkpoints, manifests,
// the CLI) shares one source of field names.

#include "json.hpp"

#include "profile.hpp"
#include "train.hpp"

namespace dlove {

using json = nlohmann::json;

inline void to_json(json& j, const Shape& s) {
    j = json{{"h", s.h}, {"w", s.w}, {"c", s.c}};
}

inline void from_json(const json& j, Shape& s) {
    j.at("h").get_to(s.h);
    j.at("w").get_to(s.w);
    j.at("c").get_to(s.c);
}

inline void to_json(json& j, const NoiseSpec& n) {
    j = json{{"kind", noise_kind_name(n.kind)}, {"strength", n.strength}};
    if (n.seed_policy == NoiseSpec::SeedPolicy::Fixed) {
        j["seed_policy"] = "fixed";
        j["fixed_seed"] = n.fixed_seed;
    }
}

inline void from_json(const json& j, NoiseSpec& n) {
    n = NoiseSpec{};
    n.kind = noise_kind_from_name(j.at("kind").get<std::string>());
    j.at("strength").get_to(n.strength);
    if (j.value("seed_policy", "fresh-per-batch") == std::string("fixed")) {
        n.seed_policy = NoiseSpec::SeedPolicy::Fixed;
        n.fixed_seed = j.value("fixed_seed", Seed{0});
    }
}

inline void to_json(json& j, const ArchParams& a) {
    j = json{{"encoder_widths", a.encoder_widths},
             {"decoder_widths", a.decoder_widths},
             {"decoder_fc", a.decoder_fc},
             {"disc_widths", a.disc_widths},
             {"pyramid_widths", a.pyramid_widths}};
}

inline void from_json(const json& j, ArchParams& a) {
    a = ArchParams{};
    if (j.contains("encoder_widths")) j.at("encoder_widths").get_to(a.encoder_widths);
    if (j.contains("decoder_widths")) j.at("decoder_widths").get_to(a.decoder_widths);
    if (j.contains("decoder_fc")) j.at("decoder_fc").get_to(a.decoder_fc);
    if (j.contains("disc_widths")) j.at("disc_widths").get_to(a.disc_widths);
    if (j.contains("pyramid_widths")) j.at("pyramid_widths").get_to(a.pyramid_widths);
}

inline void to_json(json& j, const TechniqueProfile& p) {
    j = json{{"name", p.name},
             {"cover_shape", p.cover_shape},
             {"watermark_kind",
              p.watermark_kind == Watermark::Kind::Bits ? "bits" : "image"},
             {"has_discriminator", p.has_discriminator},
             {"noise_layers", p.noise_layers},
             {"screen_shoot_robust", p.screen_shoot_robust},
             {"arch", p.arch}};
    if (p.watermark_kind == Watermark::Kind::Bits)
        j["n_bits"] = p.n_bits;
    else
        j["wm_shape"] = p.wm_shape;
}

inline void to_json(json& j, const LossWeights& w) {
    j = json{{"image-mse", w.image_mse},
             {"perceptual", w.perceptual},
             {"residual-l2", w.residual_l2},
             {"watermark", w.watermark},
             {"adversarial", w.adversarial}};
}

inline void from_json(const json& j, LossWeights& w) {
    w = LossWeights{};
    w.image_mse = j.value("image-mse", w.image_mse);
    w.perceptual = j.value("perceptual", w.perceptual);
    w.residual_l2 = j.value("residual-l2", w.residual_l2);
    w.watermark = j.value("watermark", w.watermark);
    w.adversarial = j.value("adversarial", w.adversarial);
}

inline void to_json(json& j, const TrainConfig& c) {
    j = json{{"epochs", c.epochs},
             {"batch_size", c.batch_size},
             {"learning_rate", c.learning_rate},
             {"loss_weights", c.loss_weights},
             {"seed", c.seed},
             {"pyramid_seed", c.pyramid_seed}};
}

inline void from_json(const json& j, TrainConfig& c) {
    c = TrainConfig{};
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    if (j.contains("loss_weights")) j.at("loss_weights").get_to(c.loss_weights);
    c.seed = j.value("seed", c.seed);
    c.pyramid_seed = j.value("pyramid_seed", c.pyramid_seed);
}

inline void from_json(const json& j, TechniqueProfile& p) {
    p = TechniqueProfile{};
    j.at("name").get_to(p.name);
    j.at("cover_shape").get_to(p.cover_shape);
    const auto kind = j.at("watermark_kind").get<std::string>();
    if (kind == "bits") {
        p.watermark_kind = Watermark::Kind::Bits;
        j.at("n_bits").get_to(p.n_bits);
    } else if (kind == "image") {
        p.watermark_kind = Watermark::Kind::Image;
        j.at("wm_shape").get_to(p.wm_shape);
    } else {
        throw InvalidArgument("unknown watermark kind '" + kind + "'");
    }
    p.has_discriminator = j.value("has_discriminator", false);
    if (j.contains("noise_layers"))
        p.noise_layers = j.at("noise_layers").get<std::vector<NoiseSpec>>();
    p.screen_shoot_robust = j.value("screen_shoot_robust", false);
    if (j.contains("arch")) j.at("arch").get_to(p.arch);
}

} // namespace dlove
