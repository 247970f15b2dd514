#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dataset.hpp"
#include "pipeline.hpp"
#include "train.hpp"

namespace dlove {

// One harvested observation of a target system: a watermarked image and the
// payload that was embedded into it.
struct AttackPair {
    Image watermarked;
    Watermark wm;
};

// How much data/compute a decoder fine-tuning run may spend.
struct FinetuneBudget {
    int epochs = 100;
    int num_pairs = 500;
    double learning_rate = 1e-3;
    Seed seed = 0;

    void validate() const;
};

// Per-technique fine-tuning budgets (epochs / harvested images); unknown
// techniques fall back to the umbrella 100-epoch / 500-image recipe that is
// always sufficient.
FinetuneBudget finetune_preset(const std::string& technique_name);

// One shared surrogate serving several bit-string targets at a fixed
// input/output contract. io_shape defaults to the desk-scale stand-in for
// the full 224x224x3 deployment shape.
struct CommonSurrogateSpec {
    Shape io_shape = {64, 64, 3};
    int wm_bits = 10;
    std::vector<TechniqueProfile> member_targets;
    ArchParams arch;

    // Every member must carry bit payloads at least wm_bits wide: the shared
    // payload is the first wm_bits bits of each member payload, so the cap
    // can only truncate, never pad.
    void validate() const;
};

// build_pipeline + train_pipeline under one seed; the surrogate counterpart
// of training a target.
Pipeline train_surrogate(const TechniqueProfile& profile, const Dataset& data,
                         const TrainConfig& cfg);

// Embeds n fresh seeded payloads into the first n covers through the target
// pipeline. Deterministic in (target parameters, covers, n, seed).
std::vector<AttackPair> harvest_pairs(const Pipeline& target, const Dataset& covers,
                                      int n, Seed seed);

// Head/tail split for reserving a held-out accuracy slice (default 10%).
// At least one pair stays on the training side.
std::pair<std::vector<AttackPair>, std::vector<AttackPair>>
split_pairs(const std::vector<AttackPair>& pairs, double held_out_fraction = 0.1);

// Mean decoder loss over pairs: BCE for bit payloads, MSE + perceptual
// distance for image payloads (pyramid built from pyramid_seed).
double decoder_pair_loss(const Pipeline& pipeline,
                         const std::vector<AttackPair>& pairs,
                         Seed pyramid_seed = 0);

// Mean payload fidelity of D(watermarked) against the harvested payload:
// bit accuracy, or cosine similarity for image payloads.
double pair_accuracy(const Pipeline& pipeline, const std::vector<AttackPair>& pairs);

// Returns a copy of the surrogate whose decoder was fit to the harvested
// pairs (first budget.num_pairs of them); the encoder is frozen and stays
// bit-identical.
Pipeline finetune_decoder(const Pipeline& surrogate,
                          const std::vector<AttackPair>& pairs,
                          const FinetuneBudget& budget);

// One pipeline at spec.io_shape decoding spec.wm_bits, trained like any
// surrogate; members only gate validation (all must be bit-string targets
// wide enough for the cap).
Pipeline build_common_surrogate(const CommonSurrogateSpec& spec, const Dataset& data,
                                const TrainConfig& cfg);

// Rescales a harvested pair onto the surrogate's input contract: bilinear
// resize to the surrogate cover shape and prefix-truncation of the payload
// to the surrogate's bit width.
AttackPair adapt_pair_for(const Pipeline& surrogate, const AttackPair& pair);

// finetune_decoder over an already-adapted pooled set; rejects pairs that
// do not match the surrogate contract exactly.
Pipeline finetune_common(const Pipeline& surrogate,
                         const std::vector<AttackPair>& pooled,
                         const FinetuneBudget& budget);

// Pair archives: a directory of 8-bit PNGs plus a pairs.json manifest
// mapping each image to its payload (hex bits, or a companion payload PNG
// for image watermarks).
void save_pairs(const std::vector<AttackPair>& pairs, const std::string& dir);
std::vector<AttackPair> load_pairs(const std::string& dir);

} // namespace dlove
