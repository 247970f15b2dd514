#pragma once

#include <optional>

#include "nn/layers.hpp"
#include "noise.hpp"
#include "profile.hpp"

namespace dlove {

// Raw decoder output before thresholding: N logits for bit payloads, or a
// [0,1] image for image payloads.
struct WatermarkEstimate {
    Watermark::Kind kind = Watermark::Kind::Bits;
    std::vector<double> logits;
    Tensor image;

    std::size_t size() const {
        return kind == Watermark::Kind::Bits ? logits.size() : image.size();
    }
};

// bit i = 1 iff logit i > 0 (strict: a logit of exactly 0 decodes to 0).
Watermark decode_bits(const WatermarkEstimate& estimate);

// Thresholds bit estimates; passes image estimates through as watermarks.
Watermark decode_estimate(const WatermarkEstimate& estimate);

// U-shaped residual encoder: two stride-2 stages down, payload injected as
// extra channels at the bottleneck, nearest-neighbor upsampling back with
// additive skip connections, tanh residual head. W = clamp01(I + r).
class EncoderNet {
public:
    explicit EncoderNet(const TechniqueProfile& profile);

    void init(Seed seed);

    struct Ctx {
        Tensor I;
        Tensor x0p, x0, x1p, x1, x2p, x2, x3p, x3, cat, x4p, x4;
        Tensor u1, x5p, x5, u2, x6p, x6, hp, r, pre;
    };

    // Returns the watermarked image; `residual_out` (optional) receives the
    // pre-clamp residual r for regularization terms.
    Image forward(const Image& cover, const Watermark& wm, Ctx* ctx,
                  Tensor* residual_out) const;

    // gW: loss gradient w.r.t. the clamped output; gres: additional direct
    // gradient w.r.t. the residual r (pass empty tensor when unused).
    void backward(const Ctx& ctx, const Tensor& gW, const Tensor& gres,
                  nn::ParamStore* gstore) const;

    nn::ParamStore params;

private:
    Shape cover_;
    int wm_channels_;
    Watermark::Kind wm_kind_;
    int n_bits_;
    Shape wm_shape_;
    nn::Conv2d c_in_, c_d1_, c_m1_, c_d2_, c_b_, c_u1_, c_u2_, c_out_;

    Tensor payload_channels(const Watermark& wm) const;
};

// Bit decoder: seven convolutions stepping down to a small grid, then two
// fully connected layers emitting one logit per payload bit.
class BitDecoderNet {
public:
    BitDecoderNet(const Shape& input, int n_bits, const ArchParams& arch);

    void init(Seed seed);

    struct Ctx {
        Tensor x;
        std::vector<Tensor> pre, act; // per conv stage
        std::vector<double> flat, f1p, f1;
    };

    std::vector<double> forward(const Image& x, Ctx* ctx) const;
    Tensor backward(const Ctx& ctx, const std::vector<double>& dlogits,
                    nn::ParamStore* gstore) const;

    Shape input_shape() const { return input_; }
    int n_bits() const { return n_bits_; }

    nn::ParamStore params;

private:
    Shape input_;
    int n_bits_;
    std::vector<nn::Conv2d> convs_;
    nn::Linear fc1_, fc2_;
};

// Image decoder: small convolutional autoencoder ending in a sigmoid so the
// recovered watermark is itself a valid image.
class ImageDecoderNet {
public:
    ImageDecoderNet(const Shape& input, const Shape& wm_shape, const ArchParams& arch);

    void init(Seed seed);

    struct Ctx {
        Tensor x;
        std::vector<Tensor> pre, act;
        Tensor u1, u2, p_out;
    };

    Tensor forward(const Image& x, Ctx* ctx) const;
    Tensor backward(const Ctx& ctx, const Tensor& dest, nn::ParamStore* gstore) const;

    Shape input_shape() const { return input_; }
    Shape wm_shape() const { return wm_shape_; }

    nn::ParamStore params;

private:
    Shape input_, wm_shape_;
    nn::Conv2d c1_, c2_, c3_, c4_, c5_, c6_, c7_;
};

// Real/watermarked critic: three stride-2 convolutions, global average
// pool, one logit.
class DiscriminatorNet {
public:
    DiscriminatorNet(const Shape& input, const ArchParams& arch);

    void init(Seed seed);

    struct Ctx {
        Tensor x;
        std::vector<Tensor> pre, act;
        std::vector<double> pooled;
    };

    double forward(const Image& x, Ctx* ctx) const;
    Tensor backward(const Ctx& ctx, double dlogit, nn::ParamStore* gstore) const;

    nn::ParamStore params;

private:
    Shape input_;
    std::vector<nn::Conv2d> convs_;
    nn::Linear fc_;
};

// One end-to-end watermarking system. Frozen pipelines are safe to share
// across threads (all forward/backward state lives in caller-owned Ctx).
struct Pipeline {
    TechniqueProfile profile;
    Seed init_seed = 0;
    Seed pyramid_seed = 0;           // recorded by training
    std::string train_config_json;   // recorded by training

    EncoderNet encoder;
    std::optional<BitDecoderNet> bit_decoder;
    std::optional<ImageDecoderNet> image_decoder;
    std::optional<DiscriminatorNet> discriminator;

    explicit Pipeline(const TechniqueProfile& prof);

    std::size_t decoder_param_count() const;
};

// Deterministic construction + initialization from (profile, seed).
Pipeline build_pipeline(const TechniqueProfile& profile, Seed seed);

// E(I, alpha) -> W. Output clamped to [0,1], same shape as cover.
Image embed(const Pipeline& pipeline, const Image& cover, const Watermark& wm);

// D(W) -> estimate (logits / image), no thresholding.
WatermarkEstimate extract(const Pipeline& pipeline, const Image& image);

// extract + decode_estimate.
Watermark extract_watermark(const Pipeline& pipeline, const Image& image);

// Self-describing checkpoint with a CRC32 integrity footer.
void save_pipeline(const Pipeline& pipeline, const std::string& path);
Pipeline load_pipeline(const std::string& path);

} // namespace dlove
