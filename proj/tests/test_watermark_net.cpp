#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>

#include "dataset.hpp"
#include "noise.hpp"
#include "pipeline.hpp"
#include "serialize.hpp"
#include "train.hpp"

using namespace dlove;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
    static fs::path dir = [] {
        fs::path p = fs::temp_directory_path() / "dlove-watermark-net-tests";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

double rel_err(double a, double f) {
    return std::abs(a - f) / std::max({std::abs(a), std::abs(f), 1e-3});
}

// Central finite difference of a scalar function at one coordinate.
double fd(const std::function<double()>& loss, double& coord, double h = 1e-4) {
    const double saved = coord;
    coord = saved + h;
    const double lp = loss();
    coord = saved - h;
    const double lm = loss();
    coord = saved;
    return (lp - lm) / (2.0 * h);
}

// Smallest widths every net accepts; keeps whole pipelines well under the
// 500-parameter budget of the finite-difference fixtures.
ArchParams tiny_arch() {
    ArchParams a;
    a.encoder_widths = {1, 1, 2};
    a.decoder_widths = {1, 1, 1, 1, 1};
    a.decoder_fc = 2;
    a.disc_widths = {1, 1, 1};
    a.pyramid_widths = {1, 1, 1, 1};
    return a;
}

TechniqueProfile tiny_bits_profile(bool with_disc) {
    TechniqueProfile p;
    p.name = "tiny-bits";
    p.cover_shape = {8, 8, 1};
    p.watermark_kind = Watermark::Kind::Bits;
    p.n_bits = 2;
    p.has_discriminator = with_disc;
    p.arch = tiny_arch();
    return p;
}

TechniqueProfile tiny_image_profile() {
    TechniqueProfile p;
    p.name = "tiny-image";
    p.cover_shape = {8, 8, 1};
    p.watermark_kind = Watermark::Kind::Image;
    p.wm_shape = {8, 8, 1};
    p.arch = tiny_arch();
    return p;
}

// Synthetic image squeezed into [0.3, 0.7] so clamps and noise gates stay
// inactive within finite-difference step sizes.
Image mid_image(Shape shape, Seed seed) {
    Image img = synthesize_image(shape, seed);
    for (double& v : img.data) v = 0.3 + 0.4 * v;
    return img;
}

// Freshly initialized nets have all-zero biases, which parks entire
// preactivation maps exactly on the leaky-relu kink where central
// differences straddle both branches. Jittering every parameter moves the
// fixture to a generic point; the analytic gradients are unaffected.
void jitter_params(nn::ParamStore& store, Rng& rng) {
    for (double& v : store.values) v += rng.uniform(-0.15, 0.15);
}

Dataset tiny_dataset(std::size_t count, Seed seed, Shape shape = {8, 8, 1}) {
    return build_dataset(DatasetSource::synthetic(), count, shape, seed);
}

} // namespace

TEST_CASE("build_pipeline is deterministic and honors the profile contract") {
    const TechniqueProfile prof = redmark_like_profile();
    const Pipeline a = build_pipeline(prof, 7);
    const Pipeline b = build_pipeline(prof, 7);
    CHECK(a.encoder.params.values == b.encoder.params.values);
    REQUIRE(a.bit_decoder.has_value());
    CHECK(a.bit_decoder->params.values == b.bit_decoder->params.values);
    CHECK_FALSE(a.discriminator.has_value());

    const Pipeline c = build_pipeline(prof, 8);
    CHECK(a.encoder.params.values != c.encoder.params.values);

    // 8-bit profile -> decoder emitting exactly 8 logits.
    const Image cover = mid_image(prof.cover_shape, 3);
    const WatermarkEstimate est = extract(a, cover);
    CHECK(est.kind == Watermark::Kind::Bits);
    CHECK(est.logits.size() == 8);

    // Single-channel profile rejects 3-channel images.
    const Image rgb = mid_image({32, 32, 3}, 4);
    CHECK_THROWS_AS((void)extract(a, rgb), ShapeError);
    CHECK_THROWS_AS((void)embed(a, rgb, sample_bit_watermark(8, 1)), ShapeError);
}

TEST_CASE("embed validates inputs and clamps its output") {
    const Pipeline p = build_pipeline(tiny_bits_profile(false), 21);
    const Image cover = mid_image({8, 8, 1}, 5);
    const Watermark wm = sample_bit_watermark(2, 9);

    const Image W = embed(p, cover, wm);
    CHECK(W.shape() == cover.shape());
    CHECK(W.min() >= 0.0);
    CHECK(W.max() <= 1.0);

    // Same inputs -> same output (purity).
    CHECK(embed(p, cover, wm) == W);

    CHECK_THROWS_AS((void)embed(p, cover, sample_bit_watermark(5, 9)), ShapeError);
    const Watermark img_wm = Watermark::from_image(mid_image({8, 8, 1}, 2));
    CHECK_THROWS_AS((void)embed(p, cover, img_wm), InvalidArgument);

    Image out_of_range = cover;
    out_of_range.data[0] = 2.0;
    CHECK_THROWS_AS((void)embed(p, out_of_range, wm), InvalidArgument);
}

TEST_CASE("extract is pure and shape-checked") {
    const Pipeline p = build_pipeline(tiny_bits_profile(false), 22);
    const Image img = mid_image({8, 8, 1}, 6);
    const WatermarkEstimate a = extract(p, img);
    const WatermarkEstimate b = extract(p, img);
    CHECK(a.logits == b.logits);
    CHECK(a.size() == 2);
    CHECK_THROWS_AS((void)extract(p, mid_image({4, 4, 1}, 6)), ShapeError);
}

TEST_CASE("decode_bits thresholds logits at zero") {
    WatermarkEstimate est;
    est.kind = Watermark::Kind::Bits;

    est.logits = {-2.0, 3.0, 0.1};
    CHECK(decode_bits(est).bits == std::vector<std::uint8_t>{0, 1, 1});

    est.logits = {0.0, 0.0, 0.0, 0.0};
    CHECK(decode_bits(est).bits == std::vector<std::uint8_t>{0, 0, 0, 0});

    est.logits = {5.0};
    CHECK(decode_bits(est).bits == std::vector<std::uint8_t>{1});

    // Idempotent through saturated re-encoding of the decoded bits.
    est.logits = {-0.4, 1.7, 0.0, 2.2};
    const Watermark once = decode_bits(est);
    WatermarkEstimate saturated;
    saturated.kind = Watermark::Kind::Bits;
    for (std::uint8_t b : once.bits) saturated.logits.push_back(b ? 1e9 : -1e9);
    CHECK(decode_bits(saturated).bits == once.bits);

    WatermarkEstimate image_est;
    image_est.kind = Watermark::Kind::Image;
    image_est.image = Image(2, 2, 1);
    CHECK_THROWS_AS((void)decode_bits(image_est), InvalidArgument);
    CHECK(decode_estimate(image_est).is_bits() == false);
}

TEST_CASE("apply_noise: identity cases, validity, and strength validation") {
    const Image x = mid_image({8, 8, 3}, 31);

    SUBCASE("gaussian noise with strength 0 is the identity") {
        CHECK(apply_noise(x, {NoiseSpec::Kind::GaussianNoise, 0.0}, 5) == x);
    }
    SUBCASE("crop with keep-fraction 1.0 is the identity") {
        CHECK(apply_noise(x, {NoiseSpec::Kind::Crop, 1.0}, 5) == x);
    }
    SUBCASE("3x3 box blur preserves constant images") {
        Image c(8, 8, 1);
        c.fill(0.42);
        const Image out = apply_noise(c, {NoiseSpec::Kind::Blur, 3.0}, 5);
        for (double v : out.data) CHECK(v == doctest::Approx(0.42).epsilon(1e-12));
    }
    SUBCASE("every kind yields a valid image and is seed-deterministic") {
        const std::vector<NoiseSpec> specs = {
            {NoiseSpec::Kind::GaussianNoise, 0.1}, {NoiseSpec::Kind::Blur, 5.0},
            {NoiseSpec::Kind::Crop, 0.6},          {NoiseSpec::Kind::PerspectiveWarp, 0.2},
            {NoiseSpec::Kind::MotionBlur, 5.0},    {NoiseSpec::Kind::ColorJitter, 0.3},
            {NoiseSpec::Kind::Dropout, 0.5},       {NoiseSpec::Kind::JpegProxy, 8.0}};
        for (const NoiseSpec& s : specs) {
            CAPTURE(noise_kind_name(s.kind));
            const Image a = apply_noise(x, s, 77);
            CHECK(is_valid_image(a));
            CHECK(apply_noise(x, s, 77) == a);
        }
        // Seeded randomness actually varies.
        CHECK(apply_noise(x, specs[0], 1) != apply_noise(x, specs[0], 2));
    }
    SUBCASE("out-of-bounds strengths are rejected") {
        const std::vector<NoiseSpec> bad = {
            {NoiseSpec::Kind::GaussianNoise, -0.1}, {NoiseSpec::Kind::GaussianNoise, 0.6},
            {NoiseSpec::Kind::Blur, 4.0},           {NoiseSpec::Kind::Crop, 0.0},
            {NoiseSpec::Kind::Crop, 1.1},           {NoiseSpec::Kind::PerspectiveWarp, 0.4},
            {NoiseSpec::Kind::MotionBlur, 2.0},     {NoiseSpec::Kind::ColorJitter, 0.6},
            {NoiseSpec::Kind::Dropout, 0.95},       {NoiseSpec::Kind::JpegProxy, 1.0},
            {NoiseSpec::Kind::JpegProxy, 8.5}};
        for (const NoiseSpec& s : bad) {
            CAPTURE(noise_kind_name(s.kind));
            CAPTURE(s.strength);
            CHECK_THROWS_AS((void)apply_noise(x, s, 5), InvalidArgument);
        }
    }
}

TEST_CASE("noise layers backpropagate exactly (finite differences per kind)") {
    // Weighted-sum loss through each distortion; tests the input gradient
    // the training loop and the attack rely on. JPEG's quantizer is
    // straight-through, so it is checked as a property below instead.
    const std::vector<std::pair<NoiseSpec, Shape>> cases = {
        {{NoiseSpec::Kind::GaussianNoise, 0.05}, {8, 8, 1}},
        {{NoiseSpec::Kind::Blur, 3.0}, {8, 8, 1}},
        {{NoiseSpec::Kind::Crop, 0.75}, {8, 8, 1}},
        {{NoiseSpec::Kind::PerspectiveWarp, 0.1}, {8, 8, 1}},
        {{NoiseSpec::Kind::MotionBlur, 3.0}, {8, 8, 1}},
        {{NoiseSpec::Kind::ColorJitter, 0.2}, {8, 8, 3}},
        {{NoiseSpec::Kind::Dropout, 0.3}, {8, 8, 1}}};

    Rng rng(404);
    for (const auto& [spec, shape] : cases) {
        CAPTURE(noise_kind_name(spec.kind));
        Image x = mid_image(shape, 17);
        Tensor weight(shape);
        for (double& v : weight.data) v = rng.uniform(-1.0, 1.0);
        const Seed seed = 900;

        NoiseCtx ctx;
        (void)noise_forward(x, spec, seed, &ctx);
        const Tensor analytic = noise_backward(weight, ctx);

        auto loss = [&] {
            const Image y = noise_forward(x, spec, seed, nullptr);
            double s = 0.0;
            for (std::size_t i = 0; i < y.data.size(); ++i) s += weight.data[i] * y.data[i];
            return s;
        };
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            const double numeric = fd(loss, x.data[i]);
            CHECK(rel_err(analytic.data[i], numeric) < 1e-4);
        }
    }
}

TEST_CASE("jpeg-proxy gradient is the straight-through blur transpose") {
    const Image x = mid_image({8, 8, 1}, 23);
    NoiseCtx jpeg_ctx, blur_ctx;
    (void)noise_forward(x, {NoiseSpec::Kind::JpegProxy, 8.0}, 3, &jpeg_ctx);
    (void)noise_forward(x, {NoiseSpec::Kind::Blur, 3.0}, 3, &blur_ctx);

    Tensor gout(8, 8, 1);
    Rng rng(5);
    for (double& v : gout.data) v = rng.uniform(-1.0, 1.0);
    const Tensor gj = noise_backward(gout, jpeg_ctx);
    const Tensor gb = noise_backward(gout, blur_ctx);
    REQUIRE(gj.shape() == gb.shape());
    for (std::size_t i = 0; i < gj.data.size(); ++i)
        CHECK(gj.data[i] == doctest::Approx(gb.data[i]).epsilon(1e-12));
}

TEST_CASE("training loss gradients match finite differences (bit payload, all terms)") {
    // Whole fixture — encoder + decoder + critic — stays under 500
    // parameters so every single parameter can be checked.
    Pipeline p = build_pipeline(tiny_bits_profile(true), 11);
    REQUIRE(p.encoder.params.size() + p.bit_decoder->params.size() +
                p.discriminator->params.size() <=
            500);
    Rng jitter_rng(derive_seed(11, "jitter"));
    jitter_params(p.encoder.params, jitter_rng);
    jitter_params(p.bit_decoder->params, jitter_rng);
    jitter_params(p.discriminator->params, jitter_rng);

    const Image cover = mid_image({8, 8, 1}, 41);
    const Watermark wm = sample_bit_watermark(2, 42);
    LossWeights w;
    w.image_mse = 0.7;
    w.perceptual = 0.4;
    w.residual_l2 = 0.3;
    w.watermark = 1.0;
    w.adversarial = 0.25;
    const nn::PerceptualPyramid pyr(1, 99, {1, 1, 1, 1});

    const NoiseSpec blur{NoiseSpec::Kind::Blur, 3.0};
    const NoiseSpec crop{NoiseSpec::Kind::Crop, 0.8};
    const NoiseSpec dropout{NoiseSpec::Kind::Dropout, 0.25};
    const std::vector<const NoiseSpec*> noise_cases = {nullptr, &blur, &crop, &dropout};

    for (const NoiseSpec* noise : noise_cases) {
        CAPTURE(noise ? noise_kind_name(noise->kind) : "no-noise");
        const Seed noise_seed = 71;

        p.encoder.params.zero_grads();
        p.bit_decoder->params.zero_grads();
        p.discriminator->params.zero_grads();
        const ItemLoss l = training_item_loss(p, cover, wm, w, noise, noise_seed, &pyr,
                                              nullptr, true);
        CHECK(std::isfinite(l.weighted(w)));
        const std::vector<double> g_enc = p.encoder.params.grads;
        const std::vector<double> g_dec = p.bit_decoder->params.grads;
        const std::vector<double> g_disc = p.discriminator->params.grads;

        auto total = [&] {
            return training_item_loss(p, cover, wm, w, noise, noise_seed, &pyr, nullptr,
                                      false)
                .weighted(w);
        };
        auto critic = [&] {
            return training_item_loss(p, cover, wm, w, noise, noise_seed, &pyr, nullptr,
                                      false)
                .discriminator;
        };

        for (std::size_t i = 0; i < g_enc.size(); ++i)
            CHECK(rel_err(g_enc[i], fd(total, p.encoder.params.values[i])) < 1e-4);
        for (std::size_t i = 0; i < g_dec.size(); ++i)
            CHECK(rel_err(g_dec[i], fd(total, p.bit_decoder->params.values[i])) < 1e-4);
        // The critic's own loss is a separate objective; its gradients
        // accumulate into the critic's store only.
        for (std::size_t i = 0; i < g_disc.size(); ++i)
            CHECK(rel_err(g_disc[i], fd(critic, p.discriminator->params.values[i])) <
                  1e-4);
    }
}

TEST_CASE("training loss gradients match finite differences (image payload)") {
    Pipeline p = build_pipeline(tiny_image_profile(), 14);
    REQUIRE(p.encoder.params.size() + p.image_decoder->params.size() <= 500);
    Rng jitter_rng(derive_seed(14, "jitter"));
    jitter_params(p.encoder.params, jitter_rng);
    jitter_params(p.image_decoder->params, jitter_rng);

    const Image cover = mid_image({8, 8, 1}, 43);
    const Watermark wm = Watermark::from_image(mid_image({8, 8, 1}, 44));
    LossWeights w;
    w.image_mse = 0.5;
    w.perceptual = 0.3;
    w.residual_l2 = 0.2;
    w.watermark = 1.0;
    const nn::PerceptualPyramid pyr_cover(1, 99, {1, 1, 1, 1});
    const nn::PerceptualPyramid pyr_payload(1, 98, {1, 1, 1, 1});

    p.encoder.params.zero_grads();
    p.image_decoder->params.zero_grads();
    const ItemLoss l = training_item_loss(p, cover, wm, w, nullptr, 0, &pyr_cover,
                                          &pyr_payload, true);
    CHECK(std::isfinite(l.weighted(w)));
    const std::vector<double> g_enc = p.encoder.params.grads;
    const std::vector<double> g_dec = p.image_decoder->params.grads;

    auto total = [&] {
        return training_item_loss(p, cover, wm, w, nullptr, 0, &pyr_cover, &pyr_payload,
                                  false)
            .weighted(w);
    };
    for (std::size_t i = 0; i < g_enc.size(); ++i)
        CHECK(rel_err(g_enc[i], fd(total, p.encoder.params.values[i])) < 1e-4);
    for (std::size_t i = 0; i < g_dec.size(); ++i)
        CHECK(rel_err(g_dec[i], fd(total, p.image_decoder->params.values[i])) < 1e-4);
}

TEST_CASE("train_pipeline rejects bad configs and mismatched data") {
    Pipeline p = build_pipeline(tiny_bits_profile(false), 5);
    const Dataset data = tiny_dataset(4, 61);

    TrainConfig cfg;
    cfg.epochs = 0;
    CHECK_THROWS_AS((void)train_pipeline(p, data, cfg), InvalidArgument);
    cfg.epochs = 1;
    cfg.batch_size = 0;
    CHECK_THROWS_AS((void)train_pipeline(p, data, cfg), InvalidArgument);
    cfg.batch_size = 4;
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS((void)train_pipeline(p, data, cfg), InvalidArgument);
    cfg.learning_rate = 1e-3;
    cfg.loss_weights.watermark = 0.0;
    CHECK_THROWS_AS((void)train_pipeline(p, data, cfg), InvalidArgument);
    cfg.loss_weights.watermark = 1.0;
    cfg.loss_weights.image_mse = -0.5;
    CHECK_THROWS_AS((void)train_pipeline(p, data, cfg), InvalidArgument);
    cfg.loss_weights.image_mse = 1.0;

    const Dataset wrong = tiny_dataset(4, 61, {16, 16, 1});
    CHECK_THROWS_AS((void)train_pipeline(p, wrong, cfg), ShapeError);
}

TEST_CASE("watermark-only training reduces BCE monotonically in >= 9/10 seeds") {
    // Payloads are re-sampled every epoch, so single-epoch BCE values carry
    // sampling noise; the monotonicity claim is therefore evaluated on
    // epoch averages — consecutive 10-epoch windows of the history.
    TechniqueProfile prof = tiny_bits_profile(false);
    prof.n_bits = 4;
    prof.arch.encoder_widths = {4, 8, 8};
    prof.arch.decoder_widths = {4, 8, 8, 8, 8};
    prof.arch.decoder_fc = 16;

    const Dataset data = tiny_dataset(64, 303);
    int monotone = 0;
    for (Seed seed = 1; seed <= 10; ++seed) {
        Pipeline p = build_pipeline(prof, seed);
        TrainConfig cfg;
        cfg.epochs = 30;
        cfg.batch_size = 8;
        cfg.learning_rate = 3e-3;
        cfg.loss_weights = LossWeights{0.0, 0.0, 0.0, 1.0, 0.0};
        cfg.seed = derive_seed(1000, "train", seed);
        const TrainHistory h = train_pipeline(p, data, cfg);
        REQUIRE(h.epochs.size() == 30);
        double window[3] = {0.0, 0.0, 0.0};
        for (int e = 0; e < 30; ++e) window[e / 10] += h.epochs[e].watermark / 10.0;
        monotone += window[1] < window[0] && window[2] < window[1];
    }
    CHECK(monotone >= 9);
}

TEST_CASE("adversarial weight 0 makes training independent of the critic's init") {
    const TechniqueProfile prof = tiny_bits_profile(true);
    Pipeline a = build_pipeline(prof, 17);
    Pipeline b = build_pipeline(prof, 17);
    b.discriminator->init(999); // different critic, same encoder/decoder
    REQUIRE(a.discriminator->params.values != b.discriminator->params.values);

    const Dataset data = tiny_dataset(8, 71);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.loss_weights.adversarial = 0.0;
    cfg.loss_weights.residual_l2 = 0.1;
    cfg.seed = 5;
    (void)train_pipeline(a, data, cfg);
    (void)train_pipeline(b, data, cfg);

    CHECK(a.encoder.params.values == b.encoder.params.values);
    CHECK(a.bit_decoder->params.values == b.bit_decoder->params.values);
}

TEST_CASE("train_pipeline reports divergence instead of emitting garbage") {
    // A poisoned decoder weight drives the payload logits (and so the BCE)
    // non-finite on the first batch, which must abort with a diagnostic.
    Pipeline p = build_pipeline(tiny_bits_profile(false), 3);
    p.bit_decoder->params.values[0] = std::nan("");
    const Dataset data = tiny_dataset(8, 81);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 4;
    CHECK_THROWS_AS((void)train_pipeline(p, data, cfg), DivergenceError);
}

TEST_CASE("training history bookkeeping: totals, test accuracy, recorded config") {
    Pipeline p = build_pipeline(tiny_bits_profile(true), 23);
    const Dataset data = tiny_dataset(12, 91);
    const Dataset test = tiny_dataset(6, 92);

    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.loss_weights.perceptual = 0.2;
    cfg.loss_weights.residual_l2 = 0.1;
    cfg.loss_weights.adversarial = 0.3;
    cfg.seed = 77;
    cfg.pyramid_seed = 202;

    const TrainHistory h = train_pipeline(p, data, cfg, &test);
    REQUIRE(h.epochs.size() == 2);
    for (const EpochStats& e : h.epochs) {
        const LossWeights& w = cfg.loss_weights;
        const double expect = w.image_mse * e.image_mse + w.perceptual * e.perceptual +
                              w.residual_l2 * e.residual_l2 + w.watermark * e.watermark +
                              w.adversarial * e.adversarial;
        CHECK(e.total == doctest::Approx(expect).epsilon(1e-10));
        CHECK(e.test_accuracy >= 0.0);
        CHECK(e.test_accuracy <= 1.0);
        CHECK(e.discriminator > 0.0);
    }

    CHECK(p.pyramid_seed == 202);
    const json recorded = json::parse(p.train_config_json);
    CHECK(recorded.get<TrainConfig>() == cfg);

    // Without a test set the accuracy slot stays absent (-1).
    Pipeline q = build_pipeline(tiny_bits_profile(false), 23);
    TrainConfig plain;
    plain.epochs = 1;
    plain.batch_size = 4;
    const TrainHistory h2 = train_pipeline(q, data, plain);
    CHECK(h2.epochs.at(0).test_accuracy == -1.0);
}

TEST_CASE("checkpoints round-trip bit-exactly and reject corruption") {
    const fs::path dir = scratch_dir();

    TechniqueProfile prof = tiny_bits_profile(true);
    prof.noise_layers = {{NoiseSpec::Kind::GaussianNoise, 0.02},
                         {NoiseSpec::Kind::Blur, 3.0}};
    Pipeline p = build_pipeline(prof, 31);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 4;
    cfg.loss_weights.adversarial = 0.2;
    cfg.seed = 9;
    cfg.pyramid_seed = 55;
    (void)train_pipeline(p, tiny_dataset(8, 111), cfg);

    const std::string path = (dir / "bits.ckpt").string();
    save_pipeline(p, path);
    const Pipeline r = load_pipeline(path);
    CHECK(r.profile.name == prof.name);
    CHECK(r.profile.cover_shape == prof.cover_shape);
    CHECK(r.profile.noise_layers == prof.noise_layers);
    CHECK(r.init_seed == p.init_seed);
    CHECK(r.pyramid_seed == 55);
    CHECK(r.train_config_json == p.train_config_json);
    CHECK(r.encoder.params.values == p.encoder.params.values);
    REQUIRE(r.bit_decoder.has_value());
    CHECK(r.bit_decoder->params.values == p.bit_decoder->params.values);
    REQUIRE(r.discriminator.has_value());
    CHECK(r.discriminator->params.values == p.discriminator->params.values);

    SUBCASE("image-payload pipelines round-trip too") {
        Pipeline ip = build_pipeline(tiny_image_profile(), 32);
        const std::string ipath = (dir / "image.ckpt").string();
        save_pipeline(ip, ipath);
        const Pipeline ir = load_pipeline(ipath);
        REQUIRE(ir.image_decoder.has_value());
        CHECK(ir.image_decoder->params.values == ip.image_decoder->params.values);
        CHECK(ir.profile.wm_shape == ip.profile.wm_shape);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS((void)load_pipeline((dir / "nope.ckpt").string()), IoError);
    }
    SUBCASE("not a checkpoint") {
        const std::string bad = (dir / "bad.ckpt").string();
        std::ofstream(bad) << "just some text, definitely not a checkpoint";
        CHECK_THROWS_AS((void)load_pipeline(bad), FormatError);
    }
    SUBCASE("single flipped byte fails the checksum") {
        std::vector<char> bytes;
        {
            std::ifstream in(path, std::ios::binary);
            bytes.assign(std::istreambuf_iterator<char>(in), {});
        }
        bytes[bytes.size() / 2] ^= 0x40;
        const std::string bad = (dir / "flipped.ckpt").string();
        std::ofstream(bad, std::ios::binary)
            .write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        CHECK_THROWS_AS((void)load_pipeline(bad), FormatError);
    }
    SUBCASE("truncation is detected") {
        std::vector<char> bytes;
        {
            std::ifstream in(path, std::ios::binary);
            bytes.assign(std::istreambuf_iterator<char>(in), {});
        }
        bytes.resize(bytes.size() * 2 / 3);
        const std::string bad = (dir / "short.ckpt").string();
        std::ofstream(bad, std::ios::binary)
            .write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        CHECK_THROWS_AS((void)load_pipeline(bad), FormatError);
    }
}

TEST_CASE("image-payload pipelines embed and extract end to end") {
    const Pipeline p = build_pipeline(tiny_image_profile(), 51);
    const Image cover = mid_image({8, 8, 1}, 52);
    const Watermark wm = Watermark::from_image(mid_image({8, 8, 1}, 53));

    const Image W = embed(p, cover, wm);
    CHECK(is_valid_image(W));
    const WatermarkEstimate est = extract(p, W);
    CHECK(est.kind == Watermark::Kind::Image);
    CHECK(est.image.shape() == Shape{8, 8, 1});
    CHECK(is_valid_image(est.image));
    const Watermark decoded = decode_estimate(est);
    CHECK(decoded.kind == Watermark::Kind::Image);
}
