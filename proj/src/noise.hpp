#pragma once

#include "profile.hpp"

namespace dlove {

// Saved forward state so training can backpropagate through a noise layer.
// All layers are linear or affine in the input given the seed, except for
// the final [0,1] clamp, whose gate is saved here.
struct NoiseCtx {
    NoiseSpec spec;
    Shape in_shape;
    Tensor clamp_gate;            // 1 where the clamp was inactive (affine kinds)
    Tensor mask;                  // crop/dropout keep mask
    std::vector<double> gains;    // color-jitter per-channel gains
    std::vector<double> src_y;    // warp: per-output-pixel source coordinates
    std::vector<double> src_x;
    double angle = 0.0;           // motion blur direction
};

// Distorts an image; pure in (x, spec, seed). When `ctx` is non-null the
// forward state needed for noise_backward is captured.
Image noise_forward(const Image& x, const NoiseSpec& spec, Seed seed, NoiseCtx* ctx);

// Convenience wrapper matching the pure-evaluation contract.
Image apply_noise(const Image& x, const NoiseSpec& spec, Seed seed);

// Gradient of a scalar loss with respect to the noise input, given the
// gradient with respect to the noise output.
Tensor noise_backward(const Tensor& gout, const NoiseCtx& ctx);

} // namespace dlove
