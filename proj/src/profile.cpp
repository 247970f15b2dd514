#include "profile.hpp"

#include <algorithm>

#include "dataset.hpp"

namespace dlove {

void NoiseSpec::validate() const {
    const auto in_range = [&](double lo, double hi) {
        return strength >= lo && strength <= hi;
    };
    const auto odd_in = [&](std::initializer_list<int> allowed) {
        const int v = static_cast<int>(strength);
        return strength == v && std::find(allowed.begin(), allowed.end(), v) != allowed.end();
    };
    bool ok = false;
    switch (kind) {
        case Kind::GaussianNoise: ok = in_range(0.0, 0.5); break;
        case Kind::Blur: ok = odd_in({3, 5, 7}); break;
        case Kind::Crop: ok = strength > 0.0 && strength <= 1.0; break;
        case Kind::PerspectiveWarp: ok = in_range(0.0, 0.3); break;
        case Kind::MotionBlur: ok = odd_in({3, 5, 7, 9}); break;
        case Kind::ColorJitter: ok = in_range(0.0, 0.5); break;
        case Kind::Dropout: ok = in_range(0.0, 0.9); break;
        case Kind::JpegProxy: ok = in_range(2.0, 64.0) && strength == static_cast<int>(strength); break;
    }
    if (!ok)
        throw InvalidArgument("NoiseSpec: strength " + std::to_string(strength) +
                              " out of bounds for kind " + noise_kind_name(kind));
}

std::string noise_kind_name(NoiseSpec::Kind kind) {
    switch (kind) {
        case NoiseSpec::Kind::GaussianNoise: return "gaussian-noise";
        case NoiseSpec::Kind::Blur: return "blur";
        case NoiseSpec::Kind::Crop: return "crop";
        case NoiseSpec::Kind::PerspectiveWarp: return "perspective-warp";
        case NoiseSpec::Kind::MotionBlur: return "motion-blur";
        case NoiseSpec::Kind::ColorJitter: return "color-jitter";
        case NoiseSpec::Kind::Dropout: return "dropout";
        case NoiseSpec::Kind::JpegProxy: return "jpeg-proxy";
    }
    throw InvalidArgument("noise_kind_name: unknown kind");
}

NoiseSpec::Kind noise_kind_from_name(const std::string& name) {
    for (auto kind : {NoiseSpec::Kind::GaussianNoise, NoiseSpec::Kind::Blur,
                      NoiseSpec::Kind::Crop, NoiseSpec::Kind::PerspectiveWarp,
                      NoiseSpec::Kind::MotionBlur, NoiseSpec::Kind::ColorJitter,
                      NoiseSpec::Kind::Dropout, NoiseSpec::Kind::JpegProxy})
        if (noise_kind_name(kind) == name) return kind;
    throw InvalidArgument("unknown noise kind '" + name + "'");
}

ArchParams ArchParams::micro() {
    ArchParams a;
    a.encoder_widths = {1, 2, 2};
    a.decoder_widths = {1, 2, 2, 2, 2};
    a.decoder_fc = 3;
    a.disc_widths = {2, 2, 2};
    a.pyramid_widths = {2, 2, 2, 2};
    return a;
}

void ArchParams::validate() const {
    for (int w : encoder_widths)
        if (w <= 0) throw InvalidArgument("ArchParams: encoder width must be positive");
    for (int w : decoder_widths)
        if (w <= 0) throw InvalidArgument("ArchParams: decoder width must be positive");
    for (int w : disc_widths)
        if (w <= 0) throw InvalidArgument("ArchParams: discriminator width must be positive");
    for (int w : pyramid_widths)
        if (w <= 0) throw InvalidArgument("ArchParams: pyramid width must be positive");
    if (decoder_fc <= 0) throw InvalidArgument("ArchParams: decoder_fc must be positive");
}

void TechniqueProfile::validate() const {
    if (name.empty()) throw InvalidArgument("TechniqueProfile: empty name");
    if (cover_shape.h <= 0 || cover_shape.w <= 0)
        throw InvalidArgument("TechniqueProfile '" + name + "': bad cover shape " +
                              cover_shape.str());
    if (cover_shape.c != 1 && cover_shape.c != 3)
        throw UnsupportedError("TechniqueProfile '" + name + "': channels must be 1 or 3");
    if (cover_shape.h % 4 != 0 || cover_shape.w % 4 != 0)
        throw UnsupportedError("TechniqueProfile '" + name +
                               "': cover dims must be divisible by 4 (two-level encoder)");
    if (watermark_kind == Watermark::Kind::Bits) {
        if (n_bits <= 0)
            throw InvalidArgument("TechniqueProfile '" + name + "': n_bits must be positive");
    } else {
        if (wm_shape.h != cover_shape.h || wm_shape.w != cover_shape.w)
            throw UnsupportedError("TechniqueProfile '" + name +
                                   "': image watermark must match cover height/width");
        if (wm_shape.c != 1 && wm_shape.c != 3)
            throw UnsupportedError("TechniqueProfile '" + name +
                                   "': watermark channels must be 1 or 3");
    }
    for (const auto& spec : noise_layers) spec.validate();
    if (screen_shoot_robust) {
        const auto has = [&](NoiseSpec::Kind k) {
            return std::any_of(noise_layers.begin(), noise_layers.end(),
                               [&](const NoiseSpec& s) { return s.kind == k; });
        };
        if (!has(NoiseSpec::Kind::PerspectiveWarp) || !has(NoiseSpec::Kind::MotionBlur) ||
            !has(NoiseSpec::Kind::ColorJitter))
            throw InvalidArgument("TechniqueProfile '" + name +
                                  "': screen_shoot_robust requires perspective-warp, "
                                  "motion-blur, and color-jitter noise layers");
    }
    arch.validate();
}

std::size_t TechniqueProfile::watermark_size() const {
    return watermark_kind == Watermark::Kind::Bits
               ? static_cast<std::size_t>(n_bits)
               : Tensor::checked_size(wm_shape.h, wm_shape.w, wm_shape.c);
}

Watermark TechniqueProfile::sample_watermark(Seed seed) const {
    if (watermark_kind == Watermark::Kind::Bits)
        return sample_bit_watermark(static_cast<std::size_t>(n_bits), seed);
    // Image payloads: a synthetic image of the watermark shape.
    return Watermark::from_image(synthesize_image(wm_shape, seed));
}

bool TechniqueProfile::matches(const Watermark& wm) const {
    if (wm.kind != watermark_kind) return false;
    if (wm.is_bits()) return wm.bits.size() == static_cast<std::size_t>(n_bits);
    return wm.image.shape() == wm_shape;
}

TechniqueProfile hidden_like_profile() {
    TechniqueProfile p;
    p.name = "hidden-like";
    p.cover_shape = {32, 32, 3};
    p.watermark_kind = Watermark::Kind::Bits;
    p.n_bits = 16; // published system carries 30 bits at 128x128
    p.has_discriminator = true;
    p.noise_layers = {
        {NoiseSpec::Kind::GaussianNoise, 0.02},
        {NoiseSpec::Kind::Blur, 3},
        {NoiseSpec::Kind::Crop, 0.9},
        {NoiseSpec::Kind::Dropout, 0.05},
    };
    return p;
}

TechniqueProfile redmark_like_profile() {
    TechniqueProfile p;
    p.name = "redmark-like";
    p.cover_shape = {32, 32, 1};
    p.watermark_kind = Watermark::Kind::Bits;
    p.n_bits = 8;
    p.has_discriminator = false;
    p.noise_layers = {
        {NoiseSpec::Kind::GaussianNoise, 0.02},
        {NoiseSpec::Kind::Blur, 3},
    };
    return p;
}

TechniqueProfile pimog_like_profile() {
    TechniqueProfile p;
    p.name = "pimog-like";
    p.cover_shape = {32, 32, 3};
    p.watermark_kind = Watermark::Kind::Bits;
    p.n_bits = 16; // published system carries 30 bits
    p.has_discriminator = true;
    p.screen_shoot_robust = true;
    p.noise_layers = {
        {NoiseSpec::Kind::PerspectiveWarp, 0.05},
        {NoiseSpec::Kind::MotionBlur, 3},
        {NoiseSpec::Kind::ColorJitter, 0.1},
    };
    return p;
}

TechniqueProfile hiding_like_profile() {
    TechniqueProfile p;
    p.name = "hiding-like";
    p.cover_shape = {32, 32, 3};
    p.watermark_kind = Watermark::Kind::Image;
    p.wm_shape = {32, 32, 1};
    p.has_discriminator = false;
    return p;
}

TechniqueProfile profile_by_name(const std::string& name) {
    if (name == "hidden-like") return hidden_like_profile();
    if (name == "redmark-like") return redmark_like_profile();
    if (name == "pimog-like") return pimog_like_profile();
    if (name == "hiding-like") return hiding_like_profile();
    throw InvalidArgument("unknown technique profile '" + name + "'");
}

} // namespace dlove
