#include "layers.hpp"

#include <Eigen/Dense>

#include <cstring>

namespace dlove::nn {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Gathers k x k patches into a (k*k*in_c) x (out_h*out_w) matrix whose row
// order matches the [ky][kx][in_c] weight layout. Out-of-bounds taps are
// zero (zero padding). The HWC layout makes each (ky,kx) tap a contiguous
// run of in_c doubles.
Eigen::MatrixXd im2col(const Tensor& x, int k, int stride, int pad,
                       int out_h, int out_w) {
    const int K = k * k * x.c;
    Eigen::MatrixXd cols = Eigen::MatrixXd::Zero(K, static_cast<long>(out_h) * out_w);
    for (int oy = 0; oy < out_h; ++oy)
        for (int ox = 0; ox < out_w; ++ox) {
            const long n = static_cast<long>(oy) * out_w + ox;
            double* col = cols.data() + n * K; // column-major: column is contiguous
            for (int ky = 0; ky < k; ++ky) {
                const int iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= x.h) continue;
                for (int kx = 0; kx < k; ++kx) {
                    const int ix = ox * stride - pad + kx;
                    if (ix < 0 || ix >= x.w) continue;
                    std::memcpy(col + (ky * k + kx) * x.c,
                                x.data.data() + (static_cast<std::size_t>(iy) * x.w + ix) * x.c,
                                sizeof(double) * x.c);
                }
            }
        }
    return cols;
}

// Scatter-add of a column-gradient matrix back onto the input tensor.
void col2im_add(const Eigen::MatrixXd& dcols, Tensor& dx, int k, int stride,
                int pad, int out_h, int out_w) {
    const int K = k * k * dx.c;
    for (int oy = 0; oy < out_h; ++oy)
        for (int ox = 0; ox < out_w; ++ox) {
            const long n = static_cast<long>(oy) * out_w + ox;
            const double* col = dcols.data() + n * K;
            for (int ky = 0; ky < k; ++ky) {
                const int iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= dx.h) continue;
                for (int kx = 0; kx < k; ++kx) {
                    const int ix = ox * stride - pad + kx;
                    if (ix < 0 || ix >= dx.w) continue;
                    double* dst = dx.data.data() +
                                  (static_cast<std::size_t>(iy) * dx.w + ix) * dx.c;
                    const double* src = col + (ky * k + kx) * dx.c;
                    for (int ch = 0; ch < dx.c; ++ch) dst[ch] += src[ch];
                }
            }
        }
}

double init_bound(std::size_t fan_in, double slope = 0.1) {
    return std::sqrt(6.0 / ((1.0 + slope * slope) * static_cast<double>(fan_in)));
}

} // namespace

Conv2d::Conv2d(ParamStore& store, int in_channels, int out_channels, int kernel,
               int stride_, int pad_)
    : in_c(in_channels), out_c(out_channels), k(kernel), stride(stride_), pad(pad_) {
    if (in_c <= 0 || out_c <= 0 || k <= 0 || stride <= 0 || pad < 0)
        throw InvalidArgument("Conv2d: bad layer geometry");
    w_off = store.alloc(static_cast<std::size_t>(out_c) * k * k * in_c);
    b_off = store.alloc(static_cast<std::size_t>(out_c));
}

void Conv2d::init_params(ParamStore& store, Rng& rng, double scale) const {
    const double bound = scale * init_bound(static_cast<std::size_t>(k) * k * in_c);
    const std::size_t nw = static_cast<std::size_t>(out_c) * k * k * in_c;
    for (std::size_t i = 0; i < nw; ++i)
        store.values[w_off + i] = (2.0 * rng.uniform() - 1.0) * bound;
    for (int i = 0; i < out_c; ++i) store.values[b_off + i] = 0.0;
}

Shape Conv2d::out_shape(const Shape& in) const {
    if (in.c != in_c)
        throw ShapeError("Conv2d: expected " + std::to_string(in_c) + " channels, got " +
                         std::to_string(in.c));
    const int oh = (in.h + 2 * pad - k) / stride + 1;
    const int ow = (in.w + 2 * pad - k) / stride + 1;
    if (oh <= 0 || ow <= 0)
        throw ShapeError("Conv2d: input " + in.str() + " too small for kernel");
    return {oh, ow, out_c};
}

Tensor Conv2d::forward(const ParamStore& store, const Tensor& x) const {
    const Shape os = out_shape(x.shape());
    const int K = k * k * in_c;
    const long N = static_cast<long>(os.h) * os.w;

    const Eigen::MatrixXd cols = im2col(x, k, stride, pad, os.h, os.w);
    Eigen::Map<const MatRM> W(store.values.data() + w_off, out_c, K);
    Eigen::Map<const Eigen::VectorXd> b(store.values.data() + b_off, out_c);

    Eigen::MatrixXd out_mat = W * cols;       // (out_c x N)
    out_mat.colwise() += b;

    Tensor out(os);
    for (long n = 0; n < N; ++n)
        for (int oc = 0; oc < out_c; ++oc)
            out.data[static_cast<std::size_t>(n) * out_c + oc] = out_mat(oc, n);
    return out;
}

Tensor Conv2d::backward(const ParamStore& store, const Tensor& x, const Tensor& gout,
                        ParamStore* gstore) const {
    const Shape os = out_shape(x.shape());
    if (gout.shape() != os)
        throw ShapeError("Conv2d::backward: gradient shape " + gout.shape().str() +
                         " does not match output " + os.str());
    const int K = k * k * in_c;
    const long N = static_cast<long>(os.h) * os.w;

    Eigen::MatrixXd G(out_c, N);
    for (long n = 0; n < N; ++n)
        for (int oc = 0; oc < out_c; ++oc)
            G(oc, n) = gout.data[static_cast<std::size_t>(n) * out_c + oc];

    const Eigen::MatrixXd cols = im2col(x, k, stride, pad, os.h, os.w);

    if (gstore) {
        Eigen::Map<MatRM> dW(gstore->grads.data() + w_off, out_c, K);
        dW.noalias() += G * cols.transpose();
        // Summed with a fixed-order loop: Eigen's rowwise().sum() assigned
        // through this map picks scalar/packet lanes from the map's runtime
        // alignment, which makes repeat runs differ by ULPs.
        double* db = gstore->grads.data() + b_off;
        for (int oc = 0; oc < out_c; ++oc) {
            double acc = 0.0;
            for (long n = 0; n < N; ++n) acc += G(oc, n);
            db[oc] += acc;
        }
    }

    Eigen::Map<const MatRM> W(store.values.data() + w_off, out_c, K);
    const Eigen::MatrixXd dcols = W.transpose() * G;

    Tensor dx(x.shape());
    col2im_add(dcols, dx, k, stride, pad, os.h, os.w);
    return dx;
}

Linear::Linear(ParamStore& store, int in_features, int out_features)
    : in_n(in_features), out_n(out_features) {
    if (in_n <= 0 || out_n <= 0) throw InvalidArgument("Linear: bad layer geometry");
    w_off = store.alloc(static_cast<std::size_t>(out_n) * in_n);
    b_off = store.alloc(static_cast<std::size_t>(out_n));
}

void Linear::init_params(ParamStore& store, Rng& rng, double scale) const {
    const double bound = scale * init_bound(static_cast<std::size_t>(in_n));
    const std::size_t nw = static_cast<std::size_t>(out_n) * in_n;
    for (std::size_t i = 0; i < nw; ++i)
        store.values[w_off + i] = (2.0 * rng.uniform() - 1.0) * bound;
    for (int i = 0; i < out_n; ++i) store.values[b_off + i] = 0.0;
}

// The vector paths use plain ordered loops rather than Eigen's gemv: gemv
// picks its scalar-head/vector-body split from the runtime alignment of the
// mapped buffers, so results could differ by ULPs between two allocations of
// the same network. Fixed-order loops make repeat runs bit-identical (GEMM is
// safe because both operands are packed into Eigen-owned buffers first).
std::vector<double> Linear::forward(const ParamStore& store,
                                    const std::vector<double>& x) const {
    if (static_cast<int>(x.size()) != in_n)
        throw ShapeError("Linear: expected " + std::to_string(in_n) + " inputs, got " +
                         std::to_string(x.size()));
    const double* W = store.values.data() + w_off;
    const double* b = store.values.data() + b_off;
    std::vector<double> y(out_n);
    for (int o = 0; o < out_n; ++o) {
        const double* row = W + static_cast<std::size_t>(o) * in_n;
        double acc = 0.0;
        for (int i = 0; i < in_n; ++i) acc += row[i] * x[i];
        y[o] = acc + b[o];
    }
    return y;
}

std::vector<double> Linear::backward(const ParamStore& store, const std::vector<double>& x,
                                     const std::vector<double>& gout,
                                     ParamStore* gstore) const {
    if (static_cast<int>(gout.size()) != out_n)
        throw ShapeError("Linear::backward: gradient size mismatch");
    if (gstore) {
        double* dW = gstore->grads.data() + w_off;
        double* db = gstore->grads.data() + b_off;
        for (int o = 0; o < out_n; ++o) {
            const double g = gout[o];
            double* drow = dW + static_cast<std::size_t>(o) * in_n;
            for (int i = 0; i < in_n; ++i) drow[i] += g * x[i];
            db[o] += g;
        }
    }
    const double* W = store.values.data() + w_off;
    std::vector<double> dx(in_n, 0.0);
    for (int o = 0; o < out_n; ++o) {
        const double g = gout[o];
        const double* row = W + static_cast<std::size_t>(o) * in_n;
        for (int i = 0; i < in_n; ++i) dx[i] += row[i] * g;
    }
    return dx;
}

Tensor leaky_relu(const Tensor& x, double slope) {
    Tensor y = x;
    for (double& v : y.data)
        if (v < 0.0) v *= slope;
    return y;
}

Tensor leaky_relu_backward(const Tensor& x, const Tensor& gout, double slope) {
    if (x.shape() != gout.shape()) throw ShapeError("leaky_relu_backward: shape mismatch");
    Tensor dx = gout;
    for (std::size_t i = 0; i < dx.data.size(); ++i)
        if (x.data[i] < 0.0) dx.data[i] *= slope;
    return dx;
}

Tensor tanh_forward(const Tensor& x) {
    Tensor y = x;
    for (double& v : y.data) v = std::tanh(v);
    return y;
}

Tensor tanh_backward(const Tensor& x, const Tensor& gout) {
    if (x.shape() != gout.shape()) throw ShapeError("tanh_backward: shape mismatch");
    Tensor dx = gout;
    for (std::size_t i = 0; i < dx.data.size(); ++i) {
        const double t = std::tanh(x.data[i]);
        dx.data[i] *= 1.0 - t * t;
    }
    return dx;
}

Tensor sigmoid_forward(const Tensor& x) {
    Tensor y = x;
    for (double& v : y.data) v = 1.0 / (1.0 + std::exp(-v));
    return y;
}

Tensor sigmoid_backward(const Tensor& x, const Tensor& gout) {
    if (x.shape() != gout.shape()) throw ShapeError("sigmoid_backward: shape mismatch");
    Tensor dx = gout;
    for (std::size_t i = 0; i < dx.data.size(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-x.data[i]));
        dx.data[i] *= s * (1.0 - s);
    }
    return dx;
}

Tensor upsample2x(const Tensor& x) {
    Tensor y(x.h * 2, x.w * 2, x.c);
    for (int yy = 0; yy < y.h; ++yy)
        for (int xx = 0; xx < y.w; ++xx)
            for (int ch = 0; ch < x.c; ++ch)
                y.at(yy, xx, ch) = x.at(yy / 2, xx / 2, ch);
    return y;
}

Tensor upsample2x_backward(const Tensor& gout) {
    if (gout.h % 2 != 0 || gout.w % 2 != 0)
        throw ShapeError("upsample2x_backward: odd output shape");
    Tensor dx(gout.h / 2, gout.w / 2, gout.c);
    for (int yy = 0; yy < gout.h; ++yy)
        for (int xx = 0; xx < gout.w; ++xx)
            for (int ch = 0; ch < gout.c; ++ch)
                dx.at(yy / 2, xx / 2, ch) += gout.at(yy, xx, ch);
    return dx;
}

std::vector<double> global_avg_pool(const Tensor& x) {
    std::vector<double> y(x.c, 0.0);
    for (int yy = 0; yy < x.h; ++yy)
        for (int xx = 0; xx < x.w; ++xx)
            for (int ch = 0; ch < x.c; ++ch)
                y[ch] += x.at(yy, xx, ch);
    const double inv = 1.0 / (static_cast<double>(x.h) * x.w);
    for (double& v : y) v *= inv;
    return y;
}

Tensor global_avg_pool_backward(const Shape& in_shape, const std::vector<double>& gout) {
    if (static_cast<int>(gout.size()) != in_shape.c)
        throw ShapeError("global_avg_pool_backward: channel mismatch");
    Tensor dx(in_shape);
    const double inv = 1.0 / (static_cast<double>(in_shape.h) * in_shape.w);
    for (int yy = 0; yy < in_shape.h; ++yy)
        for (int xx = 0; xx < in_shape.w; ++xx)
            for (int ch = 0; ch < in_shape.c; ++ch)
                dx.at(yy, xx, ch) = gout[ch] * inv;
    return dx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.h != b.h || a.w != b.w)
        throw ShapeError("concat_channels: spatial shape mismatch");
    Tensor y(a.h, a.w, a.c + b.c);
    for (int yy = 0; yy < a.h; ++yy)
        for (int xx = 0; xx < a.w; ++xx) {
            for (int ch = 0; ch < a.c; ++ch) y.at(yy, xx, ch) = a.at(yy, xx, ch);
            for (int ch = 0; ch < b.c; ++ch) y.at(yy, xx, a.c + ch) = b.at(yy, xx, ch);
        }
    return y;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& g, int c_a, int c_b) {
    if (g.c != c_a + c_b) throw ShapeError("split_channels: channel sum mismatch");
    Tensor ga(g.h, g.w, c_a), gb(g.h, g.w, c_b);
    for (int yy = 0; yy < g.h; ++yy)
        for (int xx = 0; xx < g.w; ++xx) {
            for (int ch = 0; ch < c_a; ++ch) ga.at(yy, xx, ch) = g.at(yy, xx, ch);
            for (int ch = 0; ch < c_b; ++ch) gb.at(yy, xx, ch) = g.at(yy, xx, c_a + ch);
        }
    return {std::move(ga), std::move(gb)};
}

} // namespace dlove::nn
