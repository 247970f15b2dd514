#include "attack.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "nn/params.hpp"

namespace dlove {

namespace {

double stable_sigmoid(double z) {
    if (z >= 0.0)
        return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

struct BitCtx final : DecoderHandle::Ctx {
    BitDecoderNet::Ctx ctx;
};

struct ImageCtx final : DecoderHandle::Ctx {
    ImageDecoderNet::Ctx ctx;
};

void require_payload_match(const WatermarkEstimate& est, const Watermark& wm,
                           const char* what) {
    const bool est_bits = est.kind == Watermark::Kind::Bits;
    if (est_bits != wm.is_bits())
        throw InvalidArgument(std::string(what) +
                              ": payload kind does not match decoder output");
    if (est_bits) {
        if (est.logits.size() != wm.bits.size())
            throw ShapeError(std::string(what) + ": payload carries " +
                             std::to_string(wm.bits.size()) +
                             " bits but decoder emits " +
                             std::to_string(est.logits.size()));
    } else if (est.image.shape() != wm.image.shape()) {
        throw ShapeError(std::string(what) + ": payload image " +
                         wm.image.shape().str() + " but decoder emits " +
                         est.image.shape().str());
    }
}

WatermarkEstimate zero_grad_like(const WatermarkEstimate& est) {
    WatermarkEstimate g;
    g.kind = est.kind;
    if (est.kind == Watermark::Kind::Bits)
        g.logits.assign(est.logits.size(), 0.0);
    else
        g.image = Tensor(est.image.shape());
    return g;
}

// l(est, target) under the configured loss, with sign*d(l)/d(est) added into
// gest when requested. Bit estimates are squashed through a sigmoid first so
// both losses compare values on the payload's own [0,1] scale.
double estimate_loss(const WatermarkEstimate& est, const Watermark& target,
                     AttackLoss loss, double sign, WatermarkEstimate* gest) {
    double acc = 0.0;
    if (est.kind == Watermark::Kind::Bits) {
        const double n = static_cast<double>(est.logits.size());
        for (std::size_t i = 0; i < est.logits.size(); ++i) {
            const double p = stable_sigmoid(est.logits[i]);
            const double diff = p - static_cast<double>(target.bits[i]);
            if (loss == AttackLoss::Mse) {
                acc += diff * diff;
                if (gest)
                    gest->logits[i] += sign * (2.0 / n) * diff * p * (1.0 - p);
            } else {
                acc += std::abs(diff);
                if (gest)
                    gest->logits[i] += sign / n *
                                       (diff > 0.0 ? 1.0 : diff < 0.0 ? -1.0 : 0.0) *
                                       p * (1.0 - p);
            }
        }
        return acc / n;
    }
    const double n = static_cast<double>(est.image.size());
    for (std::size_t i = 0; i < est.image.data.size(); ++i) {
        const double diff = est.image.data[i] - target.image.data[i];
        if (loss == AttackLoss::Mse) {
            acc += diff * diff;
            if (gest)
                gest->image.data[i] += sign * (2.0 / n) * diff;
        } else {
            acc += std::abs(diff);
            if (gest)
                gest->image.data[i] +=
                    sign / n * (diff > 0.0 ? 1.0 : diff < 0.0 ? -1.0 : 0.0);
        }
    }
    return acc / n;
}

// l(a, b) between two concrete payloads; the constant second term of the
// literal-reading objective.
double payload_pair_loss(const Watermark& a, const Watermark& b, AttackLoss loss) {
    double acc = 0.0;
    std::size_t n = 0;
    if (a.is_bits()) {
        n = a.bits.size();
        for (std::size_t i = 0; i < n; ++i) {
            const double diff =
                static_cast<double>(a.bits[i]) - static_cast<double>(b.bits[i]);
            acc += loss == AttackLoss::Mse ? diff * diff : std::abs(diff);
        }
    } else {
        n = a.image.data.size();
        for (std::size_t i = 0; i < n; ++i) {
            const double diff = a.image.data[i] - b.image.data[i];
            acc += loss == AttackLoss::Mse ? diff * diff : std::abs(diff);
        }
    }
    return acc / static_cast<double>(n);
}

bool success_against(const Watermark& extracted, const Watermark& beta,
                     const SuccessPolicy& policy) {
    if (extracted.kind != beta.kind)
        throw InvalidArgument("adjudicate: payload kinds do not match");
    if (beta.is_bits())
        return extracted == beta;
    return lpips_proxy(extracted.image, beta.image, policy.pyramid_seed) <
               policy.image_success_threshold &&
           cosine_similarity(extracted, beta) >= policy.image_cosine_min;
}

bool removal_against(const Watermark& extracted, const Watermark& alpha,
                     const SuccessPolicy& policy) {
    if (extracted.kind != alpha.kind)
        throw InvalidArgument("adjudicate: payload kinds do not match");
    if (alpha.is_bits())
        return ber(extracted, alpha) >= policy.removal_threshold;
    return cosine_similarity(extracted, alpha) < policy.removal_cosine_max;
}

// W + delta under the clamp policy.
Image delivered(const Image& W, const Tensor& delta, bool clamp_pixels) {
    Image x(W.h, W.w, W.c);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double v = W.data[i] + delta.data[i];
        x.data[i] = clamp_pixels ? std::clamp(v, 0.0, 1.0) : v;
    }
    return x;
}

// 8-bit file round trip: quantization always lands in [0,1] because a
// delivered file cannot carry out-of-range samples.
Image quantize8(const Image& x) {
    Image out(x.h, x.w, x.c);
    for (std::size_t i = 0; i < x.data.size(); ++i)
        out.data[i] = std::round(std::clamp(x.data[i], 0.0, 1.0) * 255.0) / 255.0;
    return out;
}

// Decoder pass without the [0,1] input validation of extract(): attacked
// images crafted with clamping off may legitimately leave the range.
Watermark decode_raw(const Pipeline& pipeline, const Image& x) {
    PipelineDecoderHandle handle(pipeline);
    return decode_estimate(handle.decode(x, nullptr));
}

} // namespace

void SuccessPolicy::validate() const {
    if (!(removal_threshold >= 0.0 && removal_threshold <= 1.0))
        throw InvalidArgument("SuccessPolicy: removal_threshold must lie in [0,1]");
    if (!(image_success_threshold > 0.0))
        throw InvalidArgument("SuccessPolicy: image_success_threshold must be > 0");
    if (!(image_cosine_min >= -1.0 && image_cosine_min <= 1.0))
        throw InvalidArgument("SuccessPolicy: image_cosine_min must lie in [-1,1]");
    if (!(removal_cosine_max >= -1.0 && removal_cosine_max <= 1.0))
        throw InvalidArgument("SuccessPolicy: removal_cosine_max must lie in [-1,1]");
}

void AttackConfig::validate() const {
    if (!(std::isfinite(epsilon) && epsilon > 0.0))
        throw InvalidArgument("AttackConfig: epsilon must be finite and > 0");
    if (!(std::isfinite(learning_rate) && learning_rate > 0.0))
        throw InvalidArgument("AttackConfig: learning_rate must be finite and > 0");
    if (max_iter < 1)
        throw InvalidArgument("AttackConfig: max_iter must be >= 1");
    if (check_every < 1)
        throw InvalidArgument("AttackConfig: check_every must be >= 1");
    if (escalation) {
        if (!(std::isfinite(escalation->epsilon_max) &&
              epsilon <= escalation->epsilon_max))
            throw InvalidArgument(
                "AttackConfig: escalation requires epsilon <= epsilon_max");
        if (escalation->steps < 1)
            throw InvalidArgument("AttackConfig: escalation steps must be >= 1");
    }
    policy.validate();
}

PipelineDecoderHandle::PipelineDecoderHandle(const Pipeline& pipeline)
    : pipeline_(&pipeline) {
    if (!pipeline.bit_decoder && !pipeline.image_decoder)
        throw InvalidArgument("PipelineDecoderHandle: pipeline has no decoder");
}

Shape PipelineDecoderHandle::input_shape() const {
    return pipeline_->profile.cover_shape;
}

WatermarkEstimate PipelineDecoderHandle::decode(const Image& x,
                                                std::unique_ptr<Ctx>* ctx) const {
    WatermarkEstimate est;
    if (pipeline_->bit_decoder) {
        est.kind = Watermark::Kind::Bits;
        if (ctx) {
            auto holder = std::make_unique<BitCtx>();
            est.logits = pipeline_->bit_decoder->forward(x, &holder->ctx);
            *ctx = std::move(holder);
        } else {
            est.logits = pipeline_->bit_decoder->forward(x, nullptr);
        }
    } else {
        est.kind = Watermark::Kind::Image;
        if (ctx) {
            auto holder = std::make_unique<ImageCtx>();
            est.image = pipeline_->image_decoder->forward(x, &holder->ctx);
            *ctx = std::move(holder);
        } else {
            est.image = pipeline_->image_decoder->forward(x, nullptr);
        }
    }
    return est;
}

Image PipelineDecoderHandle::backward(const Ctx* ctx,
                                      const WatermarkEstimate& gest) const {
    if (pipeline_->bit_decoder) {
        const auto* c = dynamic_cast<const BitCtx*>(ctx);
        if (!c)
            throw InvalidArgument(
                "PipelineDecoderHandle::backward: context does not belong to "
                "this decoder");
        if (gest.kind != Watermark::Kind::Bits ||
            gest.logits.size() != static_cast<std::size_t>(pipeline_->bit_decoder->n_bits()))
            throw ShapeError(
                "PipelineDecoderHandle::backward: estimate gradient arity does "
                "not match the decoder output");
        return pipeline_->bit_decoder->backward(c->ctx, gest.logits, nullptr);
    }
    const auto* c = dynamic_cast<const ImageCtx*>(ctx);
    if (!c)
        throw InvalidArgument(
            "PipelineDecoderHandle::backward: context does not belong to this "
            "decoder");
    if (gest.kind != Watermark::Kind::Image ||
        gest.image.shape() != pipeline_->image_decoder->wm_shape())
        throw ShapeError(
            "PipelineDecoderHandle::backward: estimate gradient arity does not "
            "match the decoder output");
    return pipeline_->image_decoder->backward(c->ctx, gest.image, nullptr);
}

double crafting_objective(const DecoderHandle& decoder, const Image& x,
                          const Watermark* alpha, const Watermark& beta,
                          const AttackConfig& cfg, Image* grad_x) {
    cfg.validate();
    if (x.shape() != decoder.input_shape())
        throw ShapeError("crafting_objective: input shape " + x.shape().str() +
                         " does not match decoder input " +
                         decoder.input_shape().str());
    if (!x.all_finite())
        throw InvalidArgument("crafting_objective: input has non-finite entries");
    beta.validate("crafting_objective");
    const bool needs_alpha = cfg.objective != AttackObjective::Blackbox;
    if (needs_alpha && !alpha)
        throw InvalidArgument(
            "crafting_objective: this objective needs the original payload");
    if (alpha)
        alpha->validate("crafting_objective");

    std::unique_ptr<DecoderHandle::Ctx> ctx;
    const WatermarkEstimate est = decoder.decode(x, grad_x ? &ctx : nullptr);
    require_payload_match(est, beta, "crafting_objective");
    if (needs_alpha)
        require_payload_match(est, *alpha, "crafting_objective");

    WatermarkEstimate gest = zero_grad_like(est);
    WatermarkEstimate* g = grad_x ? &gest : nullptr;
    double obj = estimate_loss(est, beta, cfg.loss, 1.0, g);
    if (cfg.objective == AttackObjective::WhiteboxFull)
        obj -= estimate_loss(est, *alpha, cfg.loss, -1.0, g);
    else if (cfg.objective == AttackObjective::AlgorithmLiteral)
        obj -= payload_pair_loss(beta, *alpha, cfg.loss);
    if (grad_x)
        *grad_x = decoder.backward(ctx.get(), gest);
    return obj;
}

CraftOutcome craft(const DecoderHandle& decoder, const Image& W,
                   const Watermark* alpha, const Watermark& beta,
                   const AttackConfig& cfg) {
    cfg.validate();
    require_valid_image(W, "craft");
    if (W.shape() != decoder.input_shape())
        throw ShapeError("craft: image shape " + W.shape().str() +
                         " does not match decoder input " +
                         decoder.input_shape().str());
    beta.validate("craft");
    const bool needs_alpha = cfg.objective != AttackObjective::Blackbox;
    if (needs_alpha && !alpha)
        throw InvalidArgument("craft: this objective needs the original payload");
    if (alpha)
        alpha->validate("craft");

    CraftOutcome out;
    out.delta.delta = Tensor(W.shape());
    Tensor& delta = out.delta.delta;
    nn::Adam adam(delta.size(), cfg.learning_rate);
    std::vector<double> gate(delta.size(), 1.0);
    Image x(W.shape());
    // Constant second term of the literal objective, computed once.
    double literal_const = 0.0;
    if (cfg.objective == AttackObjective::AlgorithmLiteral) {
        require_payload_match(decoder.decode(W, nullptr), *alpha, "craft");
        literal_const = payload_pair_loss(beta, *alpha, cfg.loss);
    }

    int steps = 0;
    for (;;) {
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            const double v = W.data[i] + delta.data[i];
            if (cfg.clamp_pixels) {
                gate[i] = (v >= 0.0 && v <= 1.0) ? 1.0 : 0.0;
                x.data[i] = std::clamp(v, 0.0, 1.0);
            } else {
                x.data[i] = v;
            }
        }

        std::unique_ptr<DecoderHandle::Ctx> ctx;
        const WatermarkEstimate est = decoder.decode(x, &ctx);
        if (steps == 0) {
            require_payload_match(est, beta, "craft");
            if (needs_alpha)
                require_payload_match(est, *alpha, "craft");
        }

        // While-condition with a cadence knob; the final candidate is always
        // adjudicated before giving up.
        const bool check_now =
            steps % cfg.check_every == 0 || steps == cfg.max_iter;
        if (check_now && success_against(decode_estimate(est), beta, cfg.policy)) {
            out.success = true;
            break;
        }
        if (steps == cfg.max_iter)
            break;

        WatermarkEstimate gest = zero_grad_like(est);
        double obj = estimate_loss(est, beta, cfg.loss, 1.0, &gest);
        if (cfg.objective == AttackObjective::WhiteboxFull)
            obj -= estimate_loss(est, *alpha, cfg.loss, -1.0, &gest);
        else if (cfg.objective == AttackObjective::AlgorithmLiteral)
            obj -= literal_const;
        if (!std::isfinite(obj))
            throw DivergenceError("crafting objective became non-finite at iteration " +
                                  std::to_string(steps));
        out.loss_trace.push_back(obj);

        Image gx = decoder.backward(ctx.get(), gest);
        if (gx.shape() != W.shape())
            throw ShapeError("craft: decoder gradient shape " + gx.shape().str() +
                             " does not match input " + W.shape().str());
        if (cfg.clamp_pixels) {
            for (std::size_t i = 0; i < gx.data.size(); ++i)
                gx.data[i] *= gate[i];
        }
        adam.step(delta.data, gx.data);
        for (double& v : delta.data)
            v = std::clamp(v, -cfg.epsilon, cfg.epsilon);
        ++steps;
    }
    out.iterations_used = steps;
    return out;
}

std::pair<bool, bool> adjudicate(const Watermark& extracted,
                                 const Watermark& alpha, const Watermark& beta,
                                 const SuccessPolicy& policy) {
    policy.validate();
    extracted.validate("adjudicate");
    alpha.validate("adjudicate");
    beta.validate("adjudicate");
    return {success_against(extracted, beta, policy),
            removal_against(extracted, alpha, policy)};
}

AttackResult attack_whitebox(const Pipeline& target, const Image& W,
                             const Watermark& alpha, const Watermark& beta,
                             const AttackConfig& cfg) {
    cfg.validate();
    PipelineDecoderHandle handle(target);
    auto one = [&](const AttackConfig& sub) {
        AttackResult r;
        CraftOutcome c = craft(handle, W, &alpha, beta, sub);
        r.delta = std::move(c.delta);
        r.loss_trace = std::move(c.loss_trace);
        r.iterations_used = c.iterations_used;
        r.attacked = delivered(W, r.delta.delta, sub.clamp_pixels);
        if (sub.quantize_before_verify)
            r.attacked = quantize8(r.attacked);
        r.extracted = decode_raw(target, r.attacked);
        auto verdict = adjudicate(r.extracted, alpha, beta, sub.policy);
        r.success = verdict.first;
        r.removal = verdict.second;
        r.epsilon_used = sub.epsilon;
        return r;
    };
    if (cfg.escalation)
        return escalate(one, cfg);
    return one(cfg);
}

AttackResult attack_blackbox(const Pipeline& surrogate, const Pipeline& target,
                             const Image& W, const Watermark& beta,
                             const AttackConfig& cfg,
                             const Watermark* target_alpha,
                             const Watermark* target_beta) {
    cfg.validate();
    require_valid_image(W, "attack_blackbox");
    const Shape target_shape = target.profile.cover_shape;
    const Shape surrogate_shape = surrogate.profile.cover_shape;
    if (W.shape() != target_shape)
        throw ShapeError("attack_blackbox: image shape " + W.shape().str() +
                         " does not match target input " + target_shape.str());
    if (surrogate_shape.c != target_shape.c)
        throw ShapeError("attack_blackbox: surrogate expects " +
                         std::to_string(surrogate_shape.c) +
                         " channels but the target carries " +
                         std::to_string(target_shape.c));
    PipelineDecoderHandle surrogate_handle(surrogate);
    const bool rescale = surrogate_shape != target_shape;
    const Image W_s =
        rescale ? resize_bilinear(W, surrogate_shape.h, surrogate_shape.w) : W;
    const Watermark& beta_target = target_beta ? *target_beta : beta;
    beta_target.validate("attack_blackbox");
    if (target_alpha)
        target_alpha->validate("attack_blackbox");

    auto one = [&](const AttackConfig& sub) {
        AttackConfig sub_bb = sub;
        sub_bb.objective = AttackObjective::Blackbox;
        AttackResult r;
        CraftOutcome c = craft(surrogate_handle, W_s, nullptr, beta, sub_bb);
        r.delta = std::move(c.delta);
        r.loss_trace = std::move(c.loss_trace);
        r.iterations_used = c.iterations_used;
        Image attacked_s = delivered(W_s, r.delta.delta, sub.clamp_pixels);
        if (rescale) {
            r.attacked = sub.clamp_pixels
                             ? resize_bilinear(attacked_s, target_shape.h,
                                               target_shape.w)
                             : resize_bilinear_raw(attacked_s, target_shape.h,
                                                   target_shape.w);
        } else {
            r.attacked = std::move(attacked_s);
        }
        if (sub.quantize_before_verify)
            r.attacked = quantize8(r.attacked);
        r.extracted = decode_raw(target, r.attacked);
        r.success = success_against(r.extracted, beta_target, sub.policy);
        r.removal = target_alpha
                        ? removal_against(r.extracted, *target_alpha, sub.policy)
                        : false;
        r.epsilon_used = sub.epsilon;
        return r;
    };
    if (cfg.escalation)
        return escalate(one, cfg);
    return one(cfg);
}

std::vector<double> escalation_schedule(const AttackConfig& cfg) {
    cfg.validate();
    if (!cfg.escalation)
        return {cfg.epsilon};
    const EscalationSchedule& esc = *cfg.escalation;
    if (esc.steps == 1)
        return {esc.epsilon_max};
    std::vector<double> budgets(static_cast<std::size_t>(esc.steps));
    const double ratio =
        std::pow(esc.epsilon_max / cfg.epsilon, 1.0 / (esc.steps - 1));
    double b = cfg.epsilon;
    for (int i = 0; i < esc.steps; ++i) {
        budgets[static_cast<std::size_t>(i)] = b;
        b *= ratio;
    }
    // Pin both endpoints so the schedule ends exactly at the cap regardless
    // of accumulated rounding.
    budgets.front() = cfg.epsilon;
    budgets.back() = esc.epsilon_max;
    return budgets;
}

AttackResult escalate(const std::function<AttackResult(const AttackConfig&)>& attack_fn,
                      const AttackConfig& cfg) {
    cfg.validate();
    if (!cfg.escalation)
        throw InvalidArgument("escalate: config has no escalation schedule");
    const std::vector<double> budgets = escalation_schedule(cfg);
    int total_iterations = 0;
    std::vector<double> trace;
    AttackResult result;
    for (double budget : budgets) {
        AttackConfig sub = cfg;
        sub.escalation.reset();
        sub.epsilon = budget;
        result = attack_fn(sub);
        total_iterations += result.iterations_used;
        trace.insert(trace.end(), result.loss_trace.begin(),
                     result.loss_trace.end());
        result.epsilon_used = budget;
        if (result.success)
            break;
    }
    result.iterations_used = total_iterations;
    result.loss_trace = std::move(trace);
    return result;
}

} // namespace dlove
