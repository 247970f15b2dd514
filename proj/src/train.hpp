#pragma once

#include "dataset.hpp"
#include "nn/pyramid.hpp"
#include "pipeline.hpp"

namespace dlove {

// Relative weights of the five training-loss terms. A weight of zero fully
// disables its term: no forward pass, no gradient, no RNG draws — so e.g.
// training with adversarial = 0 is bit-identical across discriminator seeds.
struct LossWeights {
    double image_mse = 1.0;
    double perceptual = 0.0;
    double residual_l2 = 0.0;
    double watermark = 1.0;
    double adversarial = 0.0;

    void validate() const;
    bool operator==(const LossWeights&) const = default;
};

struct TrainConfig {
    int epochs = 1;
    int batch_size = 8;
    double learning_rate = 1e-3;
    LossWeights loss_weights;
    Seed seed = 0;
    // Seed of the fixed perceptual pyramid (used only when the perceptual
    // weight is nonzero); recorded in checkpoints for reproducibility.
    Seed pyramid_seed = 0;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

// Unweighted per-epoch means of each loss term; `total` is the weighted sum
// actually optimized. `discriminator` is the critic's own classification
// loss (reported, not part of `total`). `test_accuracy` is the end-of-epoch
// bit accuracy on the held-out set (cosine similarity for image payloads),
// or -1 when no test set was supplied.
struct EpochStats {
    double total = 0.0;
    double image_mse = 0.0;
    double perceptual = 0.0;
    double residual_l2 = 0.0;
    double watermark = 0.0;
    double adversarial = 0.0;
    double discriminator = 0.0;
    double test_accuracy = -1.0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
};

// Unweighted loss terms for one training example. `discriminator` is the
// critic's own classification loss on this example.
struct ItemLoss {
    double image_mse = 0.0;
    double perceptual = 0.0;
    double residual_l2 = 0.0;
    double watermark = 0.0;
    double adversarial = 0.0;
    double discriminator = 0.0;

    double weighted(const LossWeights& w) const {
        return w.image_mse * image_mse + w.perceptual * perceptual +
               w.residual_l2 * residual_l2 + w.watermark * watermark +
               w.adversarial * adversarial;
    }
};

// One example's full training loss — the exact code path train_pipeline
// optimizes, exposed so gradients can be finite-difference checked. When
// `grads` is true, parameter gradients of the weighted total accumulate
// into the pipeline's stores (and gradients of the critic's own loss into
// the critic's store). `noise` may be null (clean pass); the pyramids are
// required only when their respective terms are live.
ItemLoss training_item_loss(Pipeline& pipeline, const Image& cover,
                            const Watermark& wm, const LossWeights& weights,
                            const NoiseSpec* noise, Seed noise_seed,
                            const nn::PerceptualPyramid* cover_pyramid,
                            const nn::PerceptualPyramid* payload_pyramid, bool grads);

// Numerically stable mean binary-cross-entropy between logits and targets.
double bce_with_logits(const std::vector<double>& logits,
                       const std::vector<std::uint8_t>& bits);

// Fraction of logits whose thresholded bit equals the target bit.
double bit_accuracy(const std::vector<double>& logits,
                    const std::vector<std::uint8_t>& bits);

// Jointly trains encoder + decoder (and the critic, when the adversarial
// weight is nonzero) with Adam. Fresh uniform payloads are sampled per item
// per epoch; one noise layer is drawn per batch from the profile's set.
// Throws DivergenceError when the loss or parameters go non-finite.
TrainHistory train_pipeline(Pipeline& pipeline, const Dataset& train,
                            const TrainConfig& cfg, const Dataset* test = nullptr);

// Mean end-to-end payload fidelity of embed -> extract over a dataset
// (bit accuracy, or cosine similarity for image payloads) with per-item
// payloads derived from `seed`.
double evaluate_pipeline(const Pipeline& pipeline, const Dataset& data, Seed seed);

} // namespace dlove
