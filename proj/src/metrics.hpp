#pragma once

#include <vector>

#include "tensor.hpp"
#include "types.hpp"
#include "watermark.hpp"

namespace dlove {

struct AttackResult; // attack.hpp

// Scalar quality and payload measures for one attacked image. Image metrics
// compare the attacked image against the watermarked original; ber/cosine
// compare payloads.
struct MetricRecord {
    double psnr = 0.0;        // dB, capped at 100
    double ssim = 0.0;        // in [-1, 1]
    double lpips_proxy = 0.0; // >= 0
    double mse = 0.0;         // >= 0
    double ber = 0.0;         // in [0, 1]
    double cosine = 0.0;      // in [-1, 1]
};

// Mean metrics plus success/removal percentages over one batch of attacks.
struct AggregateReport {
    MetricRecord means;
    double asr = 0.0;          // percent, 0..100
    double removal_rate = 0.0; // percent, 0..100
    int count = 0;
};

// Mean squared elementwise difference over all pixels and channels.
double mse(const Image& a, const Image& b);

// 10*log10(1/mse) with MAX=1 for [0,1] images; capped at 100 dB when
// mse < 1e-10 so near-identical pairs aggregate cleanly.
double psnr(const Image& a, const Image& b);

// Single-scale SSIM: 8x8 uniform window, stride 1, C1=0.01^2, C2=0.03^2 on
// the [0,1] range, averaged over window positions and channels.
double ssim(const Image& a, const Image& b);

// Stage-normalized feature distance through a fixed seeded random pyramid.
// Stands in for a pretrained perceptual metric; reports label the column
// "lpips_proxy" rather than claiming LPIPS equivalence.
double lpips_proxy(const Image& a, const Image& b, Seed pyramid_seed);

// Fraction of differing bits between two bit-string payloads.
double ber(const Watermark& a, const Watermark& b);

// Bits are mapped {0,1} -> {-1,+1} (so unrelated payloads score near 0);
// image payloads are compared as mean-centered pixel vectors.
double cosine_similarity(const Watermark& a, const Watermark& b);

// Mid-gray residual visualization: clamp01(0.5 + gain*(attacked - cover)).
Image residual(const Image& cover, const Image& attacked, double gain);

// Success/removal percentages and per-field metric means over one batch.
AggregateReport aggregate(const std::vector<AttackResult>& results);

} // namespace dlove
