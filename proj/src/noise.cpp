#include "noise.hpp"

#include <Eigen/Dense>

namespace dlove {

namespace {

struct Tap {
    int y0, y1, x0, x1;
    double wy, wx; // interpolation weights toward y1/x1
};

Tap bilinear_tap(double fy, double fx, int h, int w) {
    fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
    fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
    Tap t;
    t.y0 = static_cast<int>(std::floor(fy));
    t.x0 = static_cast<int>(std::floor(fx));
    t.y1 = std::min(t.y0 + 1, h - 1);
    t.x1 = std::min(t.x0 + 1, w - 1);
    t.wy = fy - t.y0;
    t.wx = fx - t.x0;
    return t;
}

double gather(const Tensor& x, const Tap& t, int ch) {
    const double top = x.at(t.y0, t.x0, ch) * (1.0 - t.wx) + x.at(t.y0, t.x1, ch) * t.wx;
    const double bot = x.at(t.y1, t.x0, ch) * (1.0 - t.wx) + x.at(t.y1, t.x1, ch) * t.wx;
    return top * (1.0 - t.wy) + bot * t.wy;
}

void scatter(Tensor& dx, const Tap& t, int ch, double g) {
    dx.at(t.y0, t.x0, ch) += g * (1.0 - t.wy) * (1.0 - t.wx);
    dx.at(t.y0, t.x1, ch) += g * (1.0 - t.wy) * t.wx;
    dx.at(t.y1, t.x0, ch) += g * t.wy * (1.0 - t.wx);
    dx.at(t.y1, t.x1, ch) += g * t.wy * t.wx;
}

// Clamp to [0,1] while recording where the clamp was inactive, so the
// backward pass can gate gradients.
Image clamp_with_gate(const Tensor& pre, NoiseCtx* ctx) {
    Image y = pre;
    Tensor gate(pre.shape());
    for (std::size_t i = 0; i < y.data.size(); ++i) {
        const double v = y.data[i];
        gate.data[i] = (v >= 0.0 && v <= 1.0) ? 1.0 : 0.0;
        y.data[i] = std::clamp(v, 0.0, 1.0);
    }
    if (ctx) ctx->clamp_gate = std::move(gate);
    return y;
}

// Out->in homography from four corner correspondences (DLT, last entry 1).
std::array<double, 8> solve_homography(const std::array<std::array<double, 2>, 4>& out_pts,
                                       const std::array<std::array<double, 2>, 4>& src_pts) {
    Eigen::Matrix<double, 8, 8> A;
    Eigen::Matrix<double, 8, 1> b;
    for (int i = 0; i < 4; ++i) {
        const double xo = out_pts[i][0], yo = out_pts[i][1];
        const double xs = src_pts[i][0], ys = src_pts[i][1];
        A.row(2 * i) << xo, yo, 1, 0, 0, 0, -xs * xo, -xs * yo;
        b(2 * i) = xs;
        A.row(2 * i + 1) << 0, 0, 0, xo, yo, 1, -ys * xo, -ys * yo;
        b(2 * i + 1) = ys;
    }
    const Eigen::Matrix<double, 8, 1> p = A.colPivHouseholderQr().solve(b);
    std::array<double, 8> h;
    for (int i = 0; i < 8; ++i) h[i] = p(i);
    return h;
}

Image box_blur(const Tensor& x, int k) {
    const int r = k / 2;
    Image y(x.shape());
    const double inv = 1.0 / (k * k);
    for (int yy = 0; yy < x.h; ++yy)
        for (int xx = 0; xx < x.w; ++xx)
            for (int ch = 0; ch < x.c; ++ch) {
                double acc = 0.0;
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx)
                        acc += x.at(std::clamp(yy + dy, 0, x.h - 1),
                                    std::clamp(xx + dx, 0, x.w - 1), ch);
                y.at(yy, xx, ch) = acc * inv;
            }
    return y;
}

Tensor box_blur_transpose(const Tensor& g, int k) {
    const int r = k / 2;
    Tensor dx(g.shape());
    const double inv = 1.0 / (k * k);
    for (int yy = 0; yy < g.h; ++yy)
        for (int xx = 0; xx < g.w; ++xx)
            for (int ch = 0; ch < g.c; ++ch) {
                const double gv = g.at(yy, xx, ch) * inv;
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx_ = -r; dx_ <= r; ++dx_)
                        dx.at(std::clamp(yy + dy, 0, g.h - 1),
                              std::clamp(xx + dx_, 0, g.w - 1), ch) += gv;
            }
    return dx;
}

std::vector<double> motion_offsets(int length) {
    std::vector<double> off(length);
    for (int t = 0; t < length; ++t) off[t] = t - (length - 1) / 2.0;
    return off;
}

} // namespace

Image noise_forward(const Image& x, const NoiseSpec& spec, Seed seed, NoiseCtx* ctx) {
    require_valid_image(x, "apply_noise");
    spec.validate();
    if (ctx) {
        *ctx = NoiseCtx{};
        ctx->spec = spec;
        ctx->in_shape = x.shape();
    }
    Rng rng(derive_seed(seed, "noise", static_cast<std::size_t>(spec.kind)));

    switch (spec.kind) {
        case NoiseSpec::Kind::GaussianNoise: {
            if (spec.strength == 0.0) return clamp_with_gate(x, ctx);
            Tensor pre = x;
            for (double& v : pre.data) v += spec.strength * rng.normal();
            return clamp_with_gate(pre, ctx);
        }
        case NoiseSpec::Kind::Blur:
            return box_blur(x, static_cast<int>(spec.strength));
        case NoiseSpec::Kind::Crop: {
            Tensor mask(x.h, x.w, 1);
            if (spec.strength >= 1.0) {
                mask.fill(1.0);
            } else {
                const int rh = std::max(1, static_cast<int>(std::lround(x.h * std::sqrt(spec.strength))));
                const int rw = std::max(1, static_cast<int>(std::lround(x.w * std::sqrt(spec.strength))));
                const int oy = static_cast<int>(rng.index(static_cast<std::uint64_t>(x.h - rh + 1)));
                const int ox = static_cast<int>(rng.index(static_cast<std::uint64_t>(x.w - rw + 1)));
                for (int yy = oy; yy < oy + rh; ++yy)
                    for (int xx = ox; xx < ox + rw; ++xx) mask.at(yy, xx, 0) = 1.0;
            }
            Image y(x.shape());
            for (int yy = 0; yy < x.h; ++yy)
                for (int xx = 0; xx < x.w; ++xx)
                    for (int ch = 0; ch < x.c; ++ch)
                        y.at(yy, xx, ch) =
                            mask.at(yy, xx, 0) * x.at(yy, xx, ch) +
                            (1.0 - mask.at(yy, xx, 0)) * 0.5;
            if (ctx) ctx->mask = std::move(mask);
            return y;
        }
        case NoiseSpec::Kind::PerspectiveWarp: {
            if (spec.strength == 0.0) {
                if (ctx) ctx->spec.strength = -1.0; // marks pass-through for backward
                return x;
            }
            const double H = x.h - 1.0, W = x.w - 1.0;
            const std::array<std::array<double, 2>, 4> out_pts = {
                {{0, 0}, {W, 0}, {W, H}, {0, H}}};
            std::array<std::array<double, 2>, 4> src_pts = out_pts;
            for (auto& p : src_pts) {
                p[0] += (2.0 * rng.uniform() - 1.0) * spec.strength * W;
                p[1] += (2.0 * rng.uniform() - 1.0) * spec.strength * H;
            }
            const auto hm = solve_homography(out_pts, src_pts);
            Image y(x.shape());
            std::vector<double> sy(static_cast<std::size_t>(x.h) * x.w);
            std::vector<double> sx(sy.size());
            for (int yy = 0; yy < x.h; ++yy)
                for (int xx = 0; xx < x.w; ++xx) {
                    const double den = hm[6] * xx + hm[7] * yy + 1.0;
                    const double fx = (hm[0] * xx + hm[1] * yy + hm[2]) / den;
                    const double fy = (hm[3] * xx + hm[4] * yy + hm[5]) / den;
                    sy[static_cast<std::size_t>(yy) * x.w + xx] = fy;
                    sx[static_cast<std::size_t>(yy) * x.w + xx] = fx;
                    const Tap t = bilinear_tap(fy, fx, x.h, x.w);
                    for (int ch = 0; ch < x.c; ++ch) y.at(yy, xx, ch) = gather(x, t, ch);
                }
            if (ctx) {
                ctx->src_y = std::move(sy);
                ctx->src_x = std::move(sx);
            }
            return y;
        }
        case NoiseSpec::Kind::MotionBlur: {
            const int length = static_cast<int>(spec.strength);
            const double angle = rng.uniform() * 2.0 * M_PI;
            const auto offs = motion_offsets(length);
            Image y(x.shape());
            for (int yy = 0; yy < x.h; ++yy)
                for (int xx = 0; xx < x.w; ++xx) {
                    for (double o : offs) {
                        const Tap t = bilinear_tap(yy + o * std::sin(angle),
                                                   xx + o * std::cos(angle), x.h, x.w);
                        for (int ch = 0; ch < x.c; ++ch)
                            y.at(yy, xx, ch) += gather(x, t, ch) / length;
                    }
                }
            if (ctx) ctx->angle = angle;
            return y;
        }
        case NoiseSpec::Kind::ColorJitter: {
            std::vector<double> gains(x.c);
            std::vector<double> biases(x.c);
            for (int ch = 0; ch < x.c; ++ch) {
                gains[ch] = 1.0 + spec.strength * (2.0 * rng.uniform() - 1.0);
                biases[ch] = 0.5 * spec.strength * (2.0 * rng.uniform() - 1.0);
            }
            Tensor pre(x.shape());
            for (int yy = 0; yy < x.h; ++yy)
                for (int xx = 0; xx < x.w; ++xx)
                    for (int ch = 0; ch < x.c; ++ch)
                        pre.at(yy, xx, ch) =
                            gains[ch] * (x.at(yy, xx, ch) - 0.5) + 0.5 + biases[ch];
            Image y = clamp_with_gate(pre, ctx);
            if (ctx) ctx->gains = std::move(gains);
            return y;
        }
        case NoiseSpec::Kind::Dropout: {
            Tensor mask(x.h, x.w, 1);
            for (double& v : mask.data) v = (rng.uniform() >= spec.strength) ? 1.0 : 0.0;
            Image y(x.shape());
            for (int yy = 0; yy < x.h; ++yy)
                for (int xx = 0; xx < x.w; ++xx)
                    for (int ch = 0; ch < x.c; ++ch)
                        y.at(yy, xx, ch) =
                            mask.at(yy, xx, 0) * x.at(yy, xx, ch) +
                            (1.0 - mask.at(yy, xx, 0)) * 0.5;
            if (ctx) ctx->mask = std::move(mask);
            return y;
        }
        case NoiseSpec::Kind::JpegProxy: {
            // Box blur, then uniform quantization with a straight-through
            // gradient — a stand-in for lossy compression, not a JPEG model.
            const double levels = spec.strength;
            Image y = box_blur(x, 3);
            for (double& v : y.data)
                v = std::round(v * (levels - 1.0)) / (levels - 1.0);
            return y;
        }
    }
    throw InvalidArgument("apply_noise: unknown noise kind");
}

Image apply_noise(const Image& x, const NoiseSpec& spec, Seed seed) {
    return noise_forward(x, spec, seed, nullptr);
}

Tensor noise_backward(const Tensor& gout, const NoiseCtx& ctx) {
    if (gout.shape() != ctx.in_shape)
        throw ShapeError("noise_backward: gradient shape mismatch");
    const NoiseSpec& spec = ctx.spec;

    switch (spec.kind) {
        case NoiseSpec::Kind::GaussianNoise: {
            Tensor dx = gout;
            for (std::size_t i = 0; i < dx.data.size(); ++i)
                dx.data[i] *= ctx.clamp_gate.data[i];
            return dx;
        }
        case NoiseSpec::Kind::Blur:
            return box_blur_transpose(gout, static_cast<int>(spec.strength));
        case NoiseSpec::Kind::Crop:
        case NoiseSpec::Kind::Dropout: {
            Tensor dx = gout;
            for (int yy = 0; yy < dx.h; ++yy)
                for (int xx = 0; xx < dx.w; ++xx)
                    for (int ch = 0; ch < dx.c; ++ch)
                        dx.at(yy, xx, ch) *= ctx.mask.at(yy, xx, 0);
            return dx;
        }
        case NoiseSpec::Kind::PerspectiveWarp: {
            if (spec.strength < 0.0) return gout; // pass-through marker
            Tensor dx(ctx.in_shape);
            for (int yy = 0; yy < dx.h; ++yy)
                for (int xx = 0; xx < dx.w; ++xx) {
                    const std::size_t n = static_cast<std::size_t>(yy) * dx.w + xx;
                    const Tap t = bilinear_tap(ctx.src_y[n], ctx.src_x[n], dx.h, dx.w);
                    for (int ch = 0; ch < dx.c; ++ch)
                        scatter(dx, t, ch, gout.at(yy, xx, ch));
                }
            return dx;
        }
        case NoiseSpec::Kind::MotionBlur: {
            const int length = static_cast<int>(spec.strength);
            const auto offs = motion_offsets(length);
            Tensor dx(ctx.in_shape);
            for (int yy = 0; yy < dx.h; ++yy)
                for (int xx = 0; xx < dx.w; ++xx)
                    for (double o : offs) {
                        const Tap t = bilinear_tap(yy + o * std::sin(ctx.angle),
                                                   xx + o * std::cos(ctx.angle), dx.h, dx.w);
                        for (int ch = 0; ch < dx.c; ++ch)
                            scatter(dx, t, ch, gout.at(yy, xx, ch) / length);
                    }
            return dx;
        }
        case NoiseSpec::Kind::ColorJitter: {
            Tensor dx = gout;
            for (int yy = 0; yy < dx.h; ++yy)
                for (int xx = 0; xx < dx.w; ++xx)
                    for (int ch = 0; ch < dx.c; ++ch) {
                        const std::size_t i =
                            (static_cast<std::size_t>(yy) * dx.w + xx) * dx.c + ch;
                        dx.data[i] *= ctx.clamp_gate.data[i] * ctx.gains[ch];
                    }
            return dx;
        }
        case NoiseSpec::Kind::JpegProxy:
            // Straight-through quantization: gradient passes to the blur.
            return box_blur_transpose(gout, 3);
    }
    throw InvalidArgument("noise_backward: unknown noise kind");
}

} // namespace dlove
