#pragma once

#include <array>
#include <string>
#include <vector>

#include "watermark.hpp"

namespace dlove {

// One differentiable distortion inserted between encoder and decoder
// during training. `strength` is interpreted per kind (documented next to
// each validate() bound).
struct NoiseSpec {
    enum class Kind {
        GaussianNoise, // strength = sigma in [0, 0.5]
        Blur,          // strength = odd box size in {3, 5, 7}
        Crop,          // strength = keep fraction in (0, 1]
        PerspectiveWarp, // strength = max corner shift fraction in [0, 0.3]
        MotionBlur,    // strength = odd line length in {3, 5, 7, 9}
        ColorJitter,   // strength = gain/bias amplitude in [0, 0.5]
        Dropout,       // strength = drop probability in [0, 0.9]
        JpegProxy      // strength = quantization levels in [2, 64]
    };
    enum class SeedPolicy { FreshPerBatch, Fixed };

    Kind kind = Kind::GaussianNoise;
    double strength = 0.0;
    SeedPolicy seed_policy = SeedPolicy::FreshPerBatch;
    Seed fixed_seed = 0; // used when seed_policy == Fixed

    void validate() const;
    bool operator==(const NoiseSpec&) const = default;
};

std::string noise_kind_name(NoiseSpec::Kind kind);
NoiseSpec::Kind noise_kind_from_name(const std::string& name);

// Channel widths of the toy networks. Defaults are sized for single-core
// desk-scale runs; the micro preset keeps whole pipelines under a few
// hundred parameters for finite-difference fixtures.
struct ArchParams {
    std::array<int, 3> encoder_widths = {4, 8, 12};
    std::array<int, 5> decoder_widths = {8, 10, 14, 20, 24};
    int decoder_fc = 48;
    std::array<int, 3> disc_widths = {8, 12, 16};
    std::array<int, 4> pyramid_widths = {8, 16, 32, 64};

    static ArchParams micro();
    void validate() const;
    bool operator==(const ArchParams&) const = default;
};

// Declarative description of one watermarking technique: what the published
// systems differ in (shapes, payload kind, discriminator, noise set), not
// how they are trained.
struct TechniqueProfile {
    std::string name;
    Shape cover_shape;
    Watermark::Kind watermark_kind = Watermark::Kind::Bits;
    int n_bits = 0;     // bits kind
    Shape wm_shape;     // image kind; must equal cover h/w
    bool has_discriminator = false;
    std::vector<NoiseSpec> noise_layers;
    bool screen_shoot_robust = false;
    ArchParams arch;

    void validate() const;
    std::size_t watermark_size() const;
    Watermark sample_watermark(Seed seed) const;
    bool matches(const Watermark& wm) const;
};

// Toy-scale mirrors of the published techniques' distinguishing traits:
// HiDDeN (RGB bits + discriminator + mixed noise), ReDMark (grayscale bits,
// no discriminator), PIMoG (screen-shooting noise set + discriminator),
// and an image-in-image profile served by the autoencoder decoder.
TechniqueProfile hidden_like_profile();
TechniqueProfile redmark_like_profile();
TechniqueProfile pimog_like_profile();
TechniqueProfile hiding_like_profile();
TechniqueProfile profile_by_name(const std::string& name);

} // namespace dlove
