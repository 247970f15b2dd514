#include "pipeline.hpp"

namespace dlove {

using nn::Conv2d;
using nn::Linear;
using nn::ParamStore;

namespace {

constexpr double kSlope = 0.1;

std::vector<double> vec_lrelu(const std::vector<double>& v) {
    std::vector<double> y = v;
    for (double& x : y)
        if (x < 0.0) x *= kSlope;
    return y;
}

std::vector<double> vec_lrelu_backward(const std::vector<double>& v,
                                       const std::vector<double>& g) {
    std::vector<double> dy = g;
    for (std::size_t i = 0; i < dy.size(); ++i)
        if (v[i] < 0.0) dy[i] *= kSlope;
    return dy;
}

} // namespace

Watermark decode_bits(const WatermarkEstimate& estimate) {
    if (estimate.kind != Watermark::Kind::Bits)
        throw InvalidArgument("decode_bits: estimate is not a bit estimate");
    std::vector<std::uint8_t> bits(estimate.logits.size());
    for (std::size_t i = 0; i < bits.size(); ++i)
        bits[i] = estimate.logits[i] > 0.0 ? 1 : 0;
    return Watermark::from_bits(std::move(bits));
}

Watermark decode_estimate(const WatermarkEstimate& estimate) {
    if (estimate.kind == Watermark::Kind::Bits) return decode_bits(estimate);
    return Watermark::from_image(estimate.image);
}

// ---------------------------------------------------------------- encoder

EncoderNet::EncoderNet(const TechniqueProfile& profile)
    : cover_(profile.cover_shape),
      wm_kind_(profile.watermark_kind),
      n_bits_(profile.n_bits),
      wm_shape_(profile.wm_shape) {
    const auto& w = profile.arch.encoder_widths;
    wm_channels_ = wm_kind_ == Watermark::Kind::Bits ? n_bits_ : wm_shape_.c;
    c_in_ = Conv2d(params, cover_.c, w[0], 3, 1, 1);
    c_d1_ = Conv2d(params, w[0], w[1], 3, 2, 1);
    c_m1_ = Conv2d(params, w[1], w[1], 3, 1, 1);
    c_d2_ = Conv2d(params, w[1], w[2], 3, 2, 1);
    c_b_ = Conv2d(params, w[2] + wm_channels_, w[2], 3, 1, 1);
    c_u1_ = Conv2d(params, w[2], w[1], 3, 1, 1);
    c_u2_ = Conv2d(params, w[1], w[0], 3, 1, 1);
    c_out_ = Conv2d(params, w[0], cover_.c, 3, 1, 1);
}

void EncoderNet::init(Seed seed) {
    Rng rng(seed);
    c_in_.init_params(params, rng);
    c_d1_.init_params(params, rng);
    c_m1_.init_params(params, rng);
    c_d2_.init_params(params, rng);
    c_b_.init_params(params, rng);
    c_u1_.init_params(params, rng);
    c_u2_.init_params(params, rng);
    // Small head init keeps the initial residual near zero.
    c_out_.init_params(params, rng, 0.2);
}

Tensor EncoderNet::payload_channels(const Watermark& wm) const {
    const int bh = cover_.h / 4, bw = cover_.w / 4;
    if (wm_kind_ == Watermark::Kind::Bits) {
        Tensor t(bh, bw, n_bits_);
        for (int y = 0; y < bh; ++y)
            for (int x = 0; x < bw; ++x)
                for (int b = 0; b < n_bits_; ++b)
                    t.at(y, x, b) = 2.0 * wm.bits[static_cast<std::size_t>(b)] - 1.0;
        return t;
    }
    Tensor small = resize_bilinear(wm.image, bh, bw);
    for (double& v : small.data) v = 2.0 * v - 1.0;
    return small;
}

Image EncoderNet::forward(const Image& cover, const Watermark& wm, Ctx* ctx,
                          Tensor* residual_out) const {
    if (cover.shape() != cover_)
        throw ShapeError("embed: cover shape " + cover.shape().str() +
                         " does not match profile " + cover_.str());
    if (wm.kind != wm_kind_)
        throw InvalidArgument("embed: watermark kind does not match profile");
    if (wm_kind_ == Watermark::Kind::Bits) {
        if (wm.bits.size() != static_cast<std::size_t>(n_bits_))
            throw ShapeError("embed: expected " + std::to_string(n_bits_) + " bits, got " +
                             std::to_string(wm.bits.size()));
    } else if (wm.image.shape() != wm_shape_) {
        throw ShapeError("embed: watermark image shape mismatch");
    }

    Ctx local;
    Ctx& s = ctx ? *ctx : local;
    s.I = cover;

    s.x0p = c_in_.forward(params, cover);
    s.x0 = nn::leaky_relu(s.x0p, kSlope);
    s.x1p = c_d1_.forward(params, s.x0);
    s.x1 = nn::leaky_relu(s.x1p, kSlope);
    s.x2p = c_m1_.forward(params, s.x1);
    s.x2 = nn::leaky_relu(s.x2p, kSlope);
    s.x3p = c_d2_.forward(params, s.x2);
    s.x3 = nn::leaky_relu(s.x3p, kSlope);
    s.cat = nn::concat_channels(s.x3, payload_channels(wm));
    s.x4p = c_b_.forward(params, s.cat);
    s.x4 = nn::leaky_relu(s.x4p, kSlope);
    s.u1 = nn::upsample2x(s.x4);
    s.x5p = c_u1_.forward(params, s.u1);
    s.x5 = nn::leaky_relu(s.x5p, kSlope);
    for (std::size_t i = 0; i < s.x5.data.size(); ++i) s.x5.data[i] += s.x2.data[i];
    s.u2 = nn::upsample2x(s.x5);
    s.x6p = c_u2_.forward(params, s.u2);
    s.x6 = nn::leaky_relu(s.x6p, kSlope);
    for (std::size_t i = 0; i < s.x6.data.size(); ++i) s.x6.data[i] += s.x0.data[i];
    s.hp = c_out_.forward(params, s.x6);
    s.r = nn::tanh_forward(s.hp);
    s.pre = cover;
    for (std::size_t i = 0; i < s.pre.data.size(); ++i) s.pre.data[i] += s.r.data[i];

    if (residual_out) *residual_out = s.r;
    Image W = s.pre;
    W.clamp01();
    return W;
}

void EncoderNet::backward(const Ctx& s, const Tensor& gW, const Tensor& gres,
                          ParamStore* gstore) const {
    // Gradient w.r.t. the residual r: clamp gate on the image-loss path,
    // plus any direct residual-regularization term.
    Tensor gr(s.r.shape());
    if (!gW.empty()) {
        if (gW.shape() != s.pre.shape()) throw ShapeError("EncoderNet::backward: gW shape");
        for (std::size_t i = 0; i < gr.data.size(); ++i) {
            const double v = s.pre.data[i];
            gr.data[i] = (v >= 0.0 && v <= 1.0) ? gW.data[i] : 0.0;
        }
    }
    if (!gres.empty()) {
        if (gres.shape() != s.r.shape()) throw ShapeError("EncoderNet::backward: gres shape");
        for (std::size_t i = 0; i < gr.data.size(); ++i) gr.data[i] += gres.data[i];
    }

    const Tensor ghp = nn::tanh_backward(s.hp, gr);
    Tensor gx6 = c_out_.backward(params, s.x6, ghp, gstore);
    const Tensor gx0_skip = gx6; // additive skip from x0
    const Tensor gx6p = nn::leaky_relu_backward(s.x6p, gx6, kSlope);
    const Tensor gu2 = c_u2_.backward(params, s.u2, gx6p, gstore);
    Tensor gx5 = nn::upsample2x_backward(gu2);
    const Tensor gx2_skip = gx5; // additive skip from x2
    const Tensor gx5p = nn::leaky_relu_backward(s.x5p, gx5, kSlope);
    const Tensor gu1 = c_u1_.backward(params, s.u1, gx5p, gstore);
    const Tensor gx4 = nn::upsample2x_backward(gu1);
    const Tensor gx4p = nn::leaky_relu_backward(s.x4p, gx4, kSlope);
    const Tensor gcat = c_b_.backward(params, s.cat, gx4p, gstore);
    auto [gx3, gwm] = nn::split_channels(gcat, s.x3.c, wm_channels_);
    const Tensor gx3p = nn::leaky_relu_backward(s.x3p, gx3, kSlope);
    Tensor gx2 = c_d2_.backward(params, s.x2, gx3p, gstore);
    for (std::size_t i = 0; i < gx2.data.size(); ++i) gx2.data[i] += gx2_skip.data[i];
    const Tensor gx2p = nn::leaky_relu_backward(s.x2p, gx2, kSlope);
    const Tensor gx1 = c_m1_.backward(params, s.x1, gx2p, gstore);
    const Tensor gx1p = nn::leaky_relu_backward(s.x1p, gx1, kSlope);
    Tensor gx0 = c_d1_.backward(params, s.x0, gx1p, gstore);
    for (std::size_t i = 0; i < gx0.data.size(); ++i) gx0.data[i] += gx0_skip.data[i];
    const Tensor gx0p = nn::leaky_relu_backward(s.x0p, gx0, kSlope);
    c_in_.backward(params, s.I, gx0p, gstore); // cover gradient unused
}

// ------------------------------------------------------------ bit decoder

BitDecoderNet::BitDecoderNet(const Shape& input, int n_bits, const ArchParams& arch)
    : input_(input), n_bits_(n_bits) {
    if (n_bits_ <= 0) throw InvalidArgument("BitDecoderNet: n_bits must be positive");
    const auto& d = arch.decoder_widths;
    const int widths[7] = {d[0], d[1], d[2], d[2], d[3], d[4], d[4]};
    const int strides[7] = {2, 1, 2, 1, 2, 2, 1};
    Shape cur = input;
    int in_c = input.c;
    for (int i = 0; i < 7; ++i) {
        convs_.emplace_back(params, in_c, widths[i], 3, strides[i], 1);
        cur = convs_.back().out_shape(cur);
        in_c = widths[i];
    }
    fc1_ = Linear(params, cur.h * cur.w * cur.c, arch.decoder_fc);
    fc2_ = Linear(params, arch.decoder_fc, n_bits_);
}

void BitDecoderNet::init(Seed seed) {
    Rng rng(seed);
    for (const auto& conv : convs_) conv.init_params(params, rng);
    fc1_.init_params(params, rng);
    fc2_.init_params(params, rng);
}

std::vector<double> BitDecoderNet::forward(const Image& x, Ctx* ctx) const {
    if (x.shape() != input_)
        throw ShapeError("extract: image shape " + x.shape().str() +
                         " does not match decoder input " + input_.str());
    Ctx local;
    Ctx& s = ctx ? *ctx : local;
    s.x = x;
    s.pre.clear();
    s.act.clear();
    const Tensor* cur = &s.x;
    for (const auto& conv : convs_) {
        s.pre.push_back(conv.forward(params, *cur));
        s.act.push_back(nn::leaky_relu(s.pre.back(), kSlope));
        cur = &s.act.back();
    }
    s.flat = cur->data;
    s.f1p = fc1_.forward(params, s.flat);
    s.f1 = vec_lrelu(s.f1p);
    return fc2_.forward(params, s.f1);
}

Tensor BitDecoderNet::backward(const Ctx& s, const std::vector<double>& dlogits,
                               ParamStore* gstore) const {
    const auto df1 = fc2_.backward(params, s.f1, dlogits, gstore);
    const auto df1p = vec_lrelu_backward(s.f1p, df1);
    const auto dflat = fc1_.backward(params, s.flat, df1p, gstore);

    Tensor g(s.act.back().shape());
    g.data = dflat;
    for (std::size_t i = convs_.size(); i-- > 0;) {
        const Tensor gpre = nn::leaky_relu_backward(s.pre[i], g, kSlope);
        const Tensor& in = i == 0 ? s.x : s.act[i - 1];
        g = convs_[i].backward(params, in, gpre, gstore);
    }
    return g;
}

// ----------------------------------------------------------- image decoder

ImageDecoderNet::ImageDecoderNet(const Shape& input, const Shape& wm_shape,
                                 const ArchParams& arch)
    : input_(input), wm_shape_(wm_shape) {
    const int a0 = arch.decoder_widths[0];
    const int a1 = arch.decoder_widths[1];
    const int a2 = arch.decoder_widths[2];
    c1_ = Conv2d(params, input.c, a0, 3, 2, 1);
    c2_ = Conv2d(params, a0, a1, 3, 1, 1);
    c3_ = Conv2d(params, a1, a2, 3, 2, 1);
    c4_ = Conv2d(params, a2, a2, 3, 1, 1);
    c5_ = Conv2d(params, a2, a1, 3, 1, 1);
    c6_ = Conv2d(params, a1, a0, 3, 1, 1);
    c7_ = Conv2d(params, a0, wm_shape.c, 3, 1, 1);
}

void ImageDecoderNet::init(Seed seed) {
    Rng rng(seed);
    for (const Conv2d* conv : {&c1_, &c2_, &c3_, &c4_, &c5_, &c6_, &c7_})
        conv->init_params(params, rng);
}

Tensor ImageDecoderNet::forward(const Image& x, Ctx* ctx) const {
    if (x.shape() != input_)
        throw ShapeError("extract: image shape " + x.shape().str() +
                         " does not match decoder input " + input_.str());
    Ctx local;
    Ctx& s = ctx ? *ctx : local;
    s.x = x;
    s.pre.assign(6, Tensor());
    s.act.assign(6, Tensor());

    s.pre[0] = c1_.forward(params, s.x);
    s.act[0] = nn::leaky_relu(s.pre[0], kSlope);
    s.pre[1] = c2_.forward(params, s.act[0]);
    s.act[1] = nn::leaky_relu(s.pre[1], kSlope);
    s.pre[2] = c3_.forward(params, s.act[1]);
    s.act[2] = nn::leaky_relu(s.pre[2], kSlope);
    s.pre[3] = c4_.forward(params, s.act[2]);
    s.act[3] = nn::leaky_relu(s.pre[3], kSlope);
    s.u1 = nn::upsample2x(s.act[3]);
    s.pre[4] = c5_.forward(params, s.u1);
    s.act[4] = nn::leaky_relu(s.pre[4], kSlope);
    s.u2 = nn::upsample2x(s.act[4]);
    s.pre[5] = c6_.forward(params, s.u2);
    s.act[5] = nn::leaky_relu(s.pre[5], kSlope);
    s.p_out = c7_.forward(params, s.act[5]);
    return nn::sigmoid_forward(s.p_out);
}

Tensor ImageDecoderNet::backward(const Ctx& s, const Tensor& dest,
                                 ParamStore* gstore) const {
    const Tensor dp_out = nn::sigmoid_backward(s.p_out, dest);
    const Tensor dh6 = c7_.backward(params, s.act[5], dp_out, gstore);
    const Tensor dp6 = nn::leaky_relu_backward(s.pre[5], dh6, kSlope);
    const Tensor du2 = c6_.backward(params, s.u2, dp6, gstore);
    const Tensor dh5 = nn::upsample2x_backward(du2);
    const Tensor dp5 = nn::leaky_relu_backward(s.pre[4], dh5, kSlope);
    const Tensor du1 = c5_.backward(params, s.u1, dp5, gstore);
    const Tensor dh4 = nn::upsample2x_backward(du1);
    const Tensor dp4 = nn::leaky_relu_backward(s.pre[3], dh4, kSlope);
    const Tensor dh3 = c4_.backward(params, s.act[2], dp4, gstore);
    const Tensor dp3 = nn::leaky_relu_backward(s.pre[2], dh3, kSlope);
    const Tensor dh2 = c3_.backward(params, s.act[1], dp3, gstore);
    const Tensor dp2 = nn::leaky_relu_backward(s.pre[1], dh2, kSlope);
    const Tensor dh1 = c2_.backward(params, s.act[0], dp2, gstore);
    const Tensor dp1 = nn::leaky_relu_backward(s.pre[0], dh1, kSlope);
    return c1_.backward(params, s.x, dp1, gstore);
}

// ---------------------------------------------------------- discriminator

DiscriminatorNet::DiscriminatorNet(const Shape& input, const ArchParams& arch)
    : input_(input) {
    int in_c = input.c;
    for (int w : arch.disc_widths) {
        convs_.emplace_back(params, in_c, w, 3, 2, 1);
        in_c = w;
    }
    fc_ = Linear(params, in_c, 1);
}

void DiscriminatorNet::init(Seed seed) {
    Rng rng(seed);
    for (const auto& conv : convs_) conv.init_params(params, rng);
    fc_.init_params(params, rng);
}

double DiscriminatorNet::forward(const Image& x, Ctx* ctx) const {
    if (x.shape() != input_)
        throw ShapeError("discriminator: image shape mismatch");
    Ctx local;
    Ctx& s = ctx ? *ctx : local;
    s.x = x;
    s.pre.clear();
    s.act.clear();
    const Tensor* cur = &s.x;
    for (const auto& conv : convs_) {
        s.pre.push_back(conv.forward(params, *cur));
        s.act.push_back(nn::leaky_relu(s.pre.back(), kSlope));
        cur = &s.act.back();
    }
    s.pooled = nn::global_avg_pool(*cur);
    return fc_.forward(params, s.pooled)[0];
}

Tensor DiscriminatorNet::backward(const Ctx& s, double dlogit,
                                  ParamStore* gstore) const {
    const auto dpooled = fc_.backward(params, s.pooled, {dlogit}, gstore);
    Tensor g = nn::global_avg_pool_backward(s.act.back().shape(), dpooled);
    for (std::size_t i = convs_.size(); i-- > 0;) {
        const Tensor gpre = nn::leaky_relu_backward(s.pre[i], g, kSlope);
        const Tensor& in = i == 0 ? s.x : s.act[i - 1];
        g = convs_[i].backward(params, in, gpre, gstore);
    }
    return g;
}

// ---------------------------------------------------------------- pipeline

namespace {
const TechniqueProfile& validated(const TechniqueProfile& p) {
    p.validate();
    return p;
}
} // namespace

Pipeline::Pipeline(const TechniqueProfile& prof)
    : profile(validated(prof)), encoder(profile) {
    if (profile.watermark_kind == Watermark::Kind::Bits)
        bit_decoder.emplace(profile.cover_shape, profile.n_bits, profile.arch);
    else
        image_decoder.emplace(profile.cover_shape, profile.wm_shape, profile.arch);
    if (profile.has_discriminator)
        discriminator.emplace(profile.cover_shape, profile.arch);
}

std::size_t Pipeline::decoder_param_count() const {
    return bit_decoder ? bit_decoder->params.size() : image_decoder->params.size();
}

Pipeline build_pipeline(const TechniqueProfile& profile, Seed seed) {
    Pipeline p(profile);
    p.init_seed = seed;
    p.encoder.init(derive_seed(seed, "encoder"));
    if (p.bit_decoder) p.bit_decoder->init(derive_seed(seed, "decoder"));
    if (p.image_decoder) p.image_decoder->init(derive_seed(seed, "decoder"));
    if (p.discriminator) p.discriminator->init(derive_seed(seed, "discriminator"));
    return p;
}

Image embed(const Pipeline& pipeline, const Image& cover, const Watermark& wm) {
    require_valid_image(cover, "embed");
    wm.validate("embed");
    return pipeline.encoder.forward(cover, wm, nullptr, nullptr);
}

WatermarkEstimate extract(const Pipeline& pipeline, const Image& image) {
    require_valid_image(image, "extract");
    WatermarkEstimate est;
    if (pipeline.bit_decoder) {
        est.kind = Watermark::Kind::Bits;
        est.logits = pipeline.bit_decoder->forward(image, nullptr);
    } else {
        est.kind = Watermark::Kind::Image;
        est.image = pipeline.image_decoder->forward(image, nullptr);
    }
    return est;
}

Watermark extract_watermark(const Pipeline& pipeline, const Image& image) {
    return decode_estimate(extract(pipeline, image));
}

} // namespace dlove
