#pragma once

#include <array>
#include <vector>

#include "layers.hpp"

namespace dlove::nn {

// Perceptual distance through a fixed, seeded, randomly initialized
// convolutional pyramid (stride-2 stages). Stage distances are normalized
// mean squared feature differences, averaged across stages. The pyramid is
// never trained; it plays the multi-scale comparison role of a pretrained
// perceptual network without the download.
class PerceptualPyramid {
public:
    static constexpr std::array<int, 4> kDefaultWidths = {8, 16, 32, 64};

    PerceptualPyramid(int in_channels, Seed seed,
                      std::array<int, 4> widths = kDefaultWidths);

    int in_channels() const { return in_channels_; }
    std::size_t param_count() const { return store_.size(); }

    // Stage activations for one image; cacheable for the constant side of
    // a training pair.
    std::vector<Tensor> features(const Tensor& x) const;

    double distance(const Tensor& a, const Tensor& b) const;

    // Distance between cached features and a live image, plus the gradient
    // of the distance with respect to that image (training path).
    double distance_with_grad(const std::vector<Tensor>& feats_a, const Tensor& b,
                              Tensor* db) const;

private:
    int in_channels_;
    std::array<int, 4> widths_;
    ParamStore store_;
    std::vector<Conv2d> stages_;
};

} // namespace dlove::nn
