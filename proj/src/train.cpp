#include "train.hpp"

#include <cmath>
#include <numeric>

#include "serialize.hpp"

namespace dlove {

namespace {

double bce1(double logit, double target) {
    return std::max(logit, 0.0) - logit * target + std::log1p(std::exp(-std::abs(logit)));
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double mean_sq_diff(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return s / static_cast<double>(a.data.size());
}

// Mean-centered cosine similarity; the image-payload analogue of bit
// accuracy for end-of-epoch evaluation.
double centered_cosine(const Tensor& a, const Tensor& b) {
    const std::size_t n = a.data.size();
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a.data[i];
        mb += b.data[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = a.data[i] - ma, y = b.data[i] - mb;
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if (na < 1e-24 || nb < 1e-24) return na < 1e-24 && nb < 1e-24 ? 1.0 : 0.0;
    return dot / std::sqrt(na * nb);
}

} // namespace

void LossWeights::validate() const {
    for (double w : {image_mse, perceptual, residual_l2, watermark, adversarial})
        if (!std::isfinite(w) || w < 0.0)
            throw InvalidArgument("loss weights must be finite and >= 0");
    if (watermark <= 0.0) throw InvalidArgument("watermark loss weight must be > 0");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
    if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
    if (!std::isfinite(learning_rate) || learning_rate <= 0.0)
        throw InvalidArgument("learning_rate must be > 0");
    loss_weights.validate();
}

double bce_with_logits(const std::vector<double>& logits,
                       const std::vector<std::uint8_t>& bits) {
    if (logits.size() != bits.size() || logits.empty())
        throw InvalidArgument("bce_with_logits: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) s += bce1(logits[i], bits[i]);
    return s / static_cast<double>(logits.size());
}

double bit_accuracy(const std::vector<double>& logits,
                    const std::vector<std::uint8_t>& bits) {
    if (logits.size() != bits.size() || logits.empty())
        throw InvalidArgument("bit_accuracy: size mismatch");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < logits.size(); ++i)
        hits += (logits[i] > 0.0 ? 1 : 0) == bits[i];
    return static_cast<double>(hits) / static_cast<double>(logits.size());
}

ItemLoss training_item_loss(Pipeline& pipeline, const Image& cover,
                            const Watermark& wm, const LossWeights& w,
                            const NoiseSpec* noise, Seed noise_seed,
                            const nn::PerceptualPyramid* cover_pyramid,
                            const nn::PerceptualPyramid* payload_pyramid, bool grads) {
    const TechniqueProfile& prof = pipeline.profile;
    const bool bits_kind = prof.watermark_kind == Watermark::Kind::Bits;
    const bool use_disc = w.adversarial > 0.0 && pipeline.discriminator.has_value();
    if (w.perceptual > 0.0 && !cover_pyramid)
        throw InvalidArgument("training_item_loss: perceptual term needs a pyramid");
    if (!bits_kind && !payload_pyramid)
        throw InvalidArgument("training_item_loss: image payload needs a pyramid");

    nn::ParamStore* enc_g = grads ? &pipeline.encoder.params : nullptr;
    nn::ParamStore* dec_g =
        grads ? (bits_kind ? &pipeline.bit_decoder->params
                           : &pipeline.image_decoder->params)
              : nullptr;

    ItemLoss loss;
    EncoderNet::Ctx ectx;
    Tensor r;
    const Image W = pipeline.encoder.forward(cover, wm, &ectx, &r);

    NoiseCtx nctx;
    const Image Wn = noise ? noise_forward(W, *noise, noise_seed, &nctx) : W;

    // Payload loss and its gradient back to the (noised) image.
    Tensor gWn;
    if (bits_kind) {
        BitDecoderNet::Ctx dctx;
        const auto logits = pipeline.bit_decoder->forward(Wn, &dctx);
        loss.watermark = bce_with_logits(logits, wm.bits);
        std::vector<double> dlogits(logits.size());
        const double scale = w.watermark / static_cast<double>(logits.size());
        for (std::size_t i = 0; i < logits.size(); ++i)
            dlogits[i] = scale * (sigmoid(logits[i]) - wm.bits[i]);
        gWn = pipeline.bit_decoder->backward(dctx, dlogits, dec_g);
    } else {
        ImageDecoderNet::Ctx dctx;
        const Tensor est = pipeline.image_decoder->forward(Wn, &dctx);
        const double l_mse = mean_sq_diff(est, wm.image);
        Tensor dest(est.shape());
        const double ms = 2.0 / static_cast<double>(est.size());
        for (std::size_t i = 0; i < est.data.size(); ++i)
            dest.data[i] = ms * (est.data[i] - wm.image.data[i]);
        Tensor dperc;
        const double l_p = payload_pyramid->distance_with_grad(
            payload_pyramid->features(wm.image), est, &dperc);
        for (std::size_t i = 0; i < dest.data.size(); ++i)
            dest.data[i] = w.watermark * (dest.data[i] + dperc.data[i]);
        loss.watermark = l_mse + l_p;
        gWn = pipeline.image_decoder->backward(dctx, dest, dec_g);
    }
    Tensor gW = noise ? noise_backward(gWn, nctx) : gWn;

    // Cover-fidelity losses, accumulated into the same gW.
    loss.image_mse = mean_sq_diff(cover, W);
    if (w.image_mse > 0.0) {
        const double ms = 2.0 * w.image_mse / static_cast<double>(W.size());
        for (std::size_t i = 0; i < gW.data.size(); ++i)
            gW.data[i] += ms * (W.data[i] - cover.data[i]);
    }
    if (w.perceptual > 0.0) {
        Tensor dperc;
        loss.perceptual =
            cover_pyramid->distance_with_grad(cover_pyramid->features(cover), W, &dperc);
        for (std::size_t i = 0; i < gW.data.size(); ++i)
            gW.data[i] += w.perceptual * dperc.data[i];
    }

    // Residual regularization acts on the pre-clamp residual.
    for (double v : r.data) loss.residual_l2 += v * v;
    loss.residual_l2 /= static_cast<double>(r.size());
    Tensor gres;
    if (w.residual_l2 > 0.0) {
        gres = Tensor(r.shape());
        const double rs = 2.0 * w.residual_l2 / static_cast<double>(r.size());
        for (std::size_t i = 0; i < r.data.size(); ++i) gres.data[i] = rs * r.data[i];
    }

    // Adversarial term: the encoder tries to make the critic call W real;
    // the critic itself trains on (cover = real, W = fake).
    if (use_disc) {
        DiscriminatorNet& disc = *pipeline.discriminator;
        DiscriminatorNet::Ctx fake_ctx;
        const double zf = disc.forward(W, &fake_ctx);
        loss.adversarial = bce1(zf, 1.0);
        const Tensor gfool =
            disc.backward(fake_ctx, w.adversarial * (sigmoid(zf) - 1.0), nullptr);
        for (std::size_t i = 0; i < gW.data.size(); ++i) gW.data[i] += gfool.data[i];

        DiscriminatorNet::Ctx real_ctx;
        const double zr = disc.forward(cover, &real_ctx);
        loss.discriminator = bce1(zr, 1.0) + bce1(zf, 0.0);
        if (grads) {
            disc.backward(real_ctx, sigmoid(zr) - 1.0, &disc.params);
            disc.backward(fake_ctx, sigmoid(zf), &disc.params);
        }
    }

    pipeline.encoder.backward(ectx, gW, gres, enc_g);
    return loss;
}

double evaluate_pipeline(const Pipeline& pipeline, const Dataset& data, Seed seed) {
    if (data.size() == 0) throw InvalidArgument("evaluate_pipeline: empty dataset");
    double sum = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Watermark wm = pipeline.profile.sample_watermark(derive_seed(seed, "item", i));
        const Image W = embed(pipeline, data.items[i].image, wm);
        const WatermarkEstimate est = extract(pipeline, W);
        if (est.kind == Watermark::Kind::Bits)
            sum += bit_accuracy(est.logits, wm.bits);
        else
            sum += centered_cosine(est.image, wm.image);
    }
    return sum / static_cast<double>(data.size());
}

TrainHistory train_pipeline(Pipeline& pipeline, const Dataset& train,
                            const TrainConfig& cfg, const Dataset* test) {
    cfg.validate();
    const TechniqueProfile& prof = pipeline.profile;
    if (train.size() == 0) throw InvalidArgument("train_pipeline: empty dataset");
    if (train.shape() != prof.cover_shape)
        throw ShapeError("train_pipeline: dataset shape " + train.shape().str() +
                         " does not match profile " + prof.cover_shape.str());
    if (test && test->size() > 0 && test->shape() != prof.cover_shape)
        throw ShapeError("train_pipeline: test dataset shape mismatch");

    const LossWeights& w = cfg.loss_weights;
    const bool use_perc = w.perceptual > 0.0;
    const bool use_disc = w.adversarial > 0.0 && pipeline.discriminator.has_value();
    const bool bits_kind = prof.watermark_kind == Watermark::Kind::Bits;

    nn::ParamStore& enc = pipeline.encoder.params;
    nn::ParamStore& dec =
        bits_kind ? pipeline.bit_decoder->params : pipeline.image_decoder->params;
    nn::Adam enc_opt(enc.size(), cfg.learning_rate);
    nn::Adam dec_opt(dec.size(), cfg.learning_rate);
    std::optional<nn::Adam> disc_opt;
    if (use_disc) disc_opt.emplace(pipeline.discriminator->params.size(), cfg.learning_rate);

    // Fixed perceptual pyramids; constructed only when their term is live.
    std::optional<nn::PerceptualPyramid> pyr_cover, pyr_payload;
    if (use_perc)
        pyr_cover.emplace(prof.cover_shape.c, cfg.pyramid_seed, prof.arch.pyramid_widths);
    if (!bits_kind)
        pyr_payload.emplace(prof.wm_shape.c, derive_seed(cfg.pyramid_seed, "payload"),
                            prof.arch.pyramid_widths);

    pipeline.pyramid_seed = cfg.pyramid_seed;
    pipeline.train_config_json = json(cfg).dump();

    const std::size_t n = train.size();
    const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
    TrainHistory history;
    std::uint64_t global_batch = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng order_rng(derive_seed(cfg.seed, "order", static_cast<std::uint64_t>(epoch)));
        order_rng.shuffle(order);

        EpochStats ep;
        for (std::size_t start = 0; start < n; start += bs, ++global_batch) {
            const std::size_t end = std::min(start + bs, n);
            const double inv_bn = 1.0 / static_cast<double>(end - start);

            // One distortion drawn per batch from the profile's noise set.
            const NoiseSpec* noise = nullptr;
            Seed noise_seed = 0;
            if (!prof.noise_layers.empty()) {
                Rng pick(derive_seed(cfg.seed, "noise", global_batch));
                noise = &prof.noise_layers[pick.index(prof.noise_layers.size())];
                noise_seed = noise->seed_policy == NoiseSpec::SeedPolicy::Fixed
                                 ? noise->fixed_seed
                                 : derive_seed(cfg.seed, "noise-draw", global_batch);
            }

            enc.zero_grads();
            dec.zero_grads();
            if (use_disc) pipeline.discriminator->params.zero_grads();
            double batch_loss = 0.0;

            for (std::size_t bi = start; bi < end; ++bi) {
                const std::size_t idx = order[bi];
                const Watermark wm = prof.sample_watermark(derive_seed(
                    cfg.seed, "payload", static_cast<std::uint64_t>(epoch) * n + idx));
                const ItemLoss l = training_item_loss(
                    pipeline, train.items[idx].image, wm, w, noise, noise_seed,
                    use_perc ? &*pyr_cover : nullptr,
                    pyr_payload ? &*pyr_payload : nullptr, true);

                const double item_total = l.weighted(w);
                batch_loss += item_total;
                ep.total += item_total;
                ep.image_mse += l.image_mse;
                ep.perceptual += l.perceptual;
                ep.residual_l2 += l.residual_l2;
                ep.watermark += l.watermark;
                ep.adversarial += l.adversarial;
                ep.discriminator += l.discriminator;
            }

            if (!std::isfinite(batch_loss))
                throw DivergenceError("training loss became non-finite at epoch " +
                                      std::to_string(epoch) + ", batch " +
                                      std::to_string(start / bs));

            for (double& g : enc.grads) g *= inv_bn;
            for (double& g : dec.grads) g *= inv_bn;
            enc_opt.step(enc.values, enc.grads);
            dec_opt.step(dec.values, dec.grads);
            if (use_disc) {
                auto& store = pipeline.discriminator->params;
                for (double& g : store.grads) g *= inv_bn;
                disc_opt->step(store.values, store.grads);
            }
        }

        if (!enc.all_finite() || !dec.all_finite())
            throw DivergenceError("parameters became non-finite after epoch " +
                                  std::to_string(epoch));

        const double inv_n = 1.0 / static_cast<double>(n);
        ep.total *= inv_n;
        ep.image_mse *= inv_n;
        ep.perceptual *= inv_n;
        ep.residual_l2 *= inv_n;
        ep.watermark *= inv_n;
        ep.adversarial *= inv_n;
        ep.discriminator *= inv_n;
        if (test && test->size() > 0)
            ep.test_accuracy =
                evaluate_pipeline(pipeline, *test, derive_seed(cfg.seed, "test-payload"));
        history.epochs.push_back(ep);
    }
    return history;
}

} // namespace dlove
