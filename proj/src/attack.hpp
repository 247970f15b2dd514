#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "metrics.hpp"
#include "pipeline.hpp"

namespace dlove {

// Thresholds used to call an attack successful and/or the original payload
// removed. Bit payloads use exact equality for success (BER is reported
// alongside, so threshold-based reanalysis needs no rerun); image payloads
// use a perceptual-plus-cosine predicate.
struct SuccessPolicy {
    double removal_threshold = 0.25;      // bits: removal iff BER vs alpha >= this
    double image_success_threshold = 0.1; // image: lpips_proxy vs beta below this
    double image_cosine_min = 0.9;        // image: cosine vs beta >= this
    double removal_cosine_max = 0.5;      // image: removal iff cosine vs alpha < this
    Seed pyramid_seed = 0;                // pyramid behind the perceptual predicate

    void validate() const;
};

enum class AttackLoss { Mse, L1 };

// WhiteboxFull keeps both terms of l(est, beta) - l(est, alpha) live.
// AlgorithmLiteral replaces the second term with the constant l(beta, alpha),
// so its gradient matches Blackbox and the constant only shifts the trace.
// Blackbox drops the alpha term entirely.
enum class AttackObjective { WhiteboxFull, AlgorithmLiteral, Blackbox };

struct EscalationSchedule {
    double epsilon_max = 0.5;
    int steps = 3;
};

struct AttackConfig {
    double epsilon = 0.05;      // L-infinity budget for delta
    double learning_rate = 1e-3;
    int max_iter = 5000;
    AttackLoss loss = AttackLoss::Mse;
    AttackObjective objective = AttackObjective::WhiteboxFull;
    std::optional<EscalationSchedule> escalation;
    bool clamp_pixels = true;           // clamp W+delta to [0,1] each iteration
    bool quantize_before_verify = false; // 8-bit round trip before adjudication
    Seed seed = 0;
    int check_every = 1; // success-check cadence in iterations (1 = every)
    SuccessPolicy policy;

    void validate() const;
};

struct Perturbation {
    Tensor delta;
};

struct AttackResult {
    Image attacked;
    Perturbation delta;
    Watermark extracted;
    bool success = false;
    bool removal = false;
    int iterations_used = 0;
    std::vector<double> loss_trace;
    MetricRecord metrics; // filled by the caller from the metrics module
    double epsilon_used = 0.0;
};

// Read-only differentiable decoder. decode() may fill an opaque context that
// backward() turns into a gradient with respect to the input pixels, given
// the loss gradient with respect to the estimate (logits or image payload).
// Implementations must tolerate concurrent decode calls with distinct
// contexts; craft() never mutates the decoder.
class DecoderHandle {
public:
    struct Ctx {
        virtual ~Ctx() = default;
    };

    virtual ~DecoderHandle() = default;

    virtual Shape input_shape() const = 0;

    // ctx may be null when no backward pass will follow.
    virtual WatermarkEstimate decode(const Image& x,
                                     std::unique_ptr<Ctx>* ctx) const = 0;

    // ctx is whatever the matching decode() produced (possibly null for
    // stateless analytic decoders).
    virtual Image backward(const Ctx* ctx, const WatermarkEstimate& gest) const = 0;
};

// Adapts a trained pipeline's decoder (bit or image kind) to DecoderHandle.
// The pipeline must outlive the handle.
class PipelineDecoderHandle final : public DecoderHandle {
public:
    explicit PipelineDecoderHandle(const Pipeline& pipeline);

    Shape input_shape() const override;
    WatermarkEstimate decode(const Image& x,
                             std::unique_ptr<Ctx>* ctx) const override;
    Image backward(const Ctx* ctx, const WatermarkEstimate& gest) const override;

private:
    const Pipeline* pipeline_;
};

// Everything craft() learned about one budget attempt. `success` reflects the
// crafting decoder's own early-exit predicate; delivered-image adjudication
// happens in attack_whitebox / attack_blackbox.
struct CraftOutcome {
    Perturbation delta;
    std::vector<double> loss_trace;
    int iterations_used = 0;
    bool success = false;
};

// Objective value at one candidate decoder input x (the delivered form of
// W+delta), plus optionally its gradient with respect to x. alpha may be
// null for objectives that do not use it. This is the exact quantity craft()
// descends, exposed so gradient checks hit the production path.
double crafting_objective(const DecoderHandle& decoder, const Image& x,
                          const Watermark* alpha, const Watermark& beta,
                          const AttackConfig& cfg, Image* grad_x);

// Adam descent on delta (zero-initialized) with a per-iteration clip to
// [-epsilon, epsilon]; exits early when the decoded estimate already meets
// the success predicate (checked every cfg.check_every iterations and once
// more when the budget runs out). Ignores cfg.escalation.
CraftOutcome craft(const DecoderHandle& decoder, const Image& W,
                   const Watermark* alpha, const Watermark& beta,
                   const AttackConfig& cfg);

// (success, removal) for one extracted payload given the original alpha and
// the attack target beta.
std::pair<bool, bool> adjudicate(const Watermark& extracted,
                                 const Watermark& alpha, const Watermark& beta,
                                 const SuccessPolicy& policy);

// Crafts against the target's own decoder, delivers clamp(W+delta), and
// adjudicates on the extracted payload. Honors cfg.escalation.
AttackResult attack_whitebox(const Pipeline& target, const Image& W,
                             const Watermark& alpha, const Watermark& beta,
                             const AttackConfig& cfg);

// Crafts against the surrogate decoder only (objective forced to Blackbox),
// rescaling W up to the surrogate resolution and the attacked image back
// down when the two pipelines disagree; the returned delta stays at the
// crafting resolution, since that is the object the epsilon budget governs.
// Success/removal are adjudicated on
// the target decoder alone. target_beta (default: beta) is beta expressed in
// the target's payload space when the surrogate payload is wider;
// target_alpha enables the removal verdict (without it removal stays false,
// matching a fully black-box caller that never saw the original payload).
AttackResult attack_blackbox(const Pipeline& surrogate, const Pipeline& target,
                             const Image& W, const Watermark& beta,
                             const AttackConfig& cfg,
                             const Watermark* target_alpha = nullptr,
                             const Watermark* target_beta = nullptr);

// The budgets escalate() walks through: cfg.epsilon rising geometrically to
// escalation.epsilon_max, last entry exactly epsilon_max. Without an
// escalation block the schedule is just {cfg.epsilon}.
std::vector<double> escalation_schedule(const AttackConfig& cfg);

// Runs attack_fn at each scheduled budget, returning the first success or
// the last failure. iterations_used and loss_trace accumulate across
// attempts; epsilon_used records the budget of the returned attempt.
AttackResult escalate(const std::function<AttackResult(const AttackConfig&)>& attack_fn,
                      const AttackConfig& cfg);

} // namespace dlove
