#include <doctest.h>

#include <functional>

#include "nn/layers.hpp"
#include "nn/params.hpp"
#include "nn/pyramid.hpp"

using namespace dlove;
using namespace dlove::nn;

namespace {

Tensor random_tensor(int h, int w, int c, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(h, w, c);
    for (auto& v : t.data) v = lo + (hi - lo) * rng.uniform();
    return t;
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

// Naive direct convolution used as an independent oracle for the
// im2col/GEMM path.
Tensor conv_reference(const ParamStore& store, const Conv2d& conv, const Tensor& x) {
    const Shape os = conv.out_shape(x.shape());
    Tensor out(os);
    for (int oy = 0; oy < os.h; ++oy)
        for (int ox = 0; ox < os.w; ++ox)
            for (int oc = 0; oc < conv.out_c; ++oc) {
                double acc = store.values[conv.b_off + oc];
                for (int ky = 0; ky < conv.k; ++ky)
                    for (int kx = 0; kx < conv.k; ++kx) {
                        const int iy = oy * conv.stride - conv.pad + ky;
                        const int ix = ox * conv.stride - conv.pad + kx;
                        if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) continue;
                        for (int ic = 0; ic < conv.in_c; ++ic) {
                            const std::size_t wi =
                                conv.w_off +
                                ((static_cast<std::size_t>(oc) * conv.k + ky) * conv.k + kx) *
                                    conv.in_c +
                                ic;
                            acc += store.values[wi] * x.at(iy, ix, ic);
                        }
                    }
                out.at(oy, ox, oc) = acc;
            }
    return out;
}

} // namespace

TEST_CASE("conv2d forward equals the naive direct convolution") {
    Rng rng(101);
    for (auto [stride, pad] : {std::pair{1, 1}, {2, 1}, {1, 0}, {2, 0}}) {
        ParamStore store;
        Conv2d conv(store, 3, 4, 3, stride, pad);
        conv.init_params(store, rng);
        const Tensor x = random_tensor(6, 5, 3, rng);
        const Tensor got = conv.forward(store, x);
        const Tensor want = conv_reference(store, conv, x);
        REQUIRE(got.shape() == want.shape());
        for (std::size_t i = 0; i < got.data.size(); ++i)
            CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv2d output shape arithmetic") {
    ParamStore store;
    Conv2d same(store, 1, 2, 3, 1, 1);
    CHECK(same.out_shape({8, 8, 1}) == Shape{8, 8, 2});
    Conv2d down(store, 1, 2, 3, 2, 1);
    CHECK(down.out_shape({8, 8, 1}) == Shape{4, 4, 2});
    CHECK(down.out_shape({7, 7, 1}) == Shape{4, 4, 2});
    CHECK_THROWS_AS(same.out_shape({8, 8, 3}), ShapeError);
}

TEST_CASE("conv2d gradients match finite differences") {
    Rng rng(202);
    for (auto [stride, pad] : {std::pair{1, 1}, {2, 1}}) {
        ParamStore store;
        Conv2d conv(store, 2, 3, 3, stride, pad);
        conv.init_params(store, rng);
        Tensor x = random_tensor(5, 4, 2, rng);
        const Shape os = conv.out_shape(x.shape());
        const Tensor weights = random_tensor(os.h, os.w, os.c, rng);

        const auto loss = [&] {
            const Tensor y = conv.forward(store, x);
            double l = 0.0;
            for (std::size_t i = 0; i < y.data.size(); ++i)
                l += weights.data[i] * y.data[i] + 0.05 * y.data[i] * y.data[i];
            return l;
        };

        // Analytic gradients: dL/dy = weights + 0.1*y.
        const Tensor y0 = conv.forward(store, x);
        Tensor gout = weights;
        for (std::size_t i = 0; i < gout.data.size(); ++i)
            gout.data[i] += 0.1 * y0.data[i];
        ParamStore gstore = store;
        gstore.zero_grads();
        const Tensor dx = conv.backward(store, x, gout, &gstore);

        for (std::size_t i = 0; i < store.size(); ++i) {
            const double f = fd(loss, store.values[i]);
            CHECK(rel_err(gstore.grads[i], f) < 1e-4);
        }
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            const double f = fd(loss, x.data[i]);
            CHECK(rel_err(dx.data[i], f) < 1e-4);
        }
    }
}

TEST_CASE("linear gradients match finite differences") {
    Rng rng(303);
    ParamStore store;
    Linear lin(store, 6, 4);
    lin.init_params(store, rng);
    std::vector<double> x(6);
    for (auto& v : x) v = 2.0 * rng.uniform() - 1.0;
    std::vector<double> w(4);
    for (auto& v : w) v = 2.0 * rng.uniform() - 1.0;

    const auto loss = [&] {
        const auto y = lin.forward(store, x);
        double l = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) l += w[i] * y[i] + 0.1 * y[i] * y[i];
        return l;
    };

    const auto y0 = lin.forward(store, x);
    std::vector<double> gout(4);
    for (std::size_t i = 0; i < 4; ++i) gout[i] = w[i] + 0.2 * y0[i];
    ParamStore gstore = store;
    gstore.zero_grads();
    const auto dx = lin.backward(store, x, gout, &gstore);

    for (std::size_t i = 0; i < store.size(); ++i)
        CHECK(rel_err(gstore.grads[i], fd(loss, store.values[i])) < 1e-4);
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(rel_err(dx[i], fd(loss, x[i])) < 1e-4);
}

TEST_CASE("activation and pooling gradients match finite differences") {
    Rng rng(404);
    Tensor x = random_tensor(4, 4, 2, rng);
    // Keep probe points away from the leaky-relu kink so the finite
    // difference stays on one linear piece.
    for (auto& v : x.data)
        if (std::abs(v) < 5e-3) v = 0.1;
    const Tensor w = random_tensor(4, 4, 2, rng);

    SUBCASE("leaky relu") {
        const auto loss = [&] {
            const Tensor y = leaky_relu(x);
            double l = 0.0;
            for (std::size_t i = 0; i < y.data.size(); ++i) l += w.data[i] * y.data[i];
            return l;
        };
        const Tensor dx = leaky_relu_backward(x, w);
        for (std::size_t i = 0; i < x.data.size(); ++i)
            CHECK(rel_err(dx.data[i], fd(loss, x.data[i])) < 1e-4);
    }

    SUBCASE("tanh") {
        const auto loss = [&] {
            const Tensor y = tanh_forward(x);
            double l = 0.0;
            for (std::size_t i = 0; i < y.data.size(); ++i) l += w.data[i] * y.data[i];
            return l;
        };
        const Tensor dx = tanh_backward(x, w);
        for (std::size_t i = 0; i < x.data.size(); ++i)
            CHECK(rel_err(dx.data[i], fd(loss, x.data[i])) < 1e-4);
    }

    SUBCASE("sigmoid") {
        const auto loss = [&] {
            const Tensor y = sigmoid_forward(x);
            double l = 0.0;
            for (std::size_t i = 0; i < y.data.size(); ++i) l += w.data[i] * y.data[i];
            return l;
        };
        const Tensor dx = sigmoid_backward(x, w);
        for (std::size_t i = 0; i < x.data.size(); ++i)
            CHECK(rel_err(dx.data[i], fd(loss, x.data[i])) < 1e-4);
    }

    SUBCASE("upsample2x") {
        const Tensor wide = random_tensor(8, 8, 2, rng);
        const auto loss = [&] {
            const Tensor y = upsample2x(x);
            double l = 0.0;
            for (std::size_t i = 0; i < y.data.size(); ++i) l += wide.data[i] * y.data[i];
            return l;
        };
        const Tensor dx = upsample2x_backward(wide);
        for (std::size_t i = 0; i < x.data.size(); ++i)
            CHECK(rel_err(dx.data[i], fd(loss, x.data[i])) < 1e-4);
    }

    SUBCASE("global average pool") {
        std::vector<double> wc = {0.7, -1.3};
        const auto loss = [&] {
            const auto y = global_avg_pool(x);
            return wc[0] * y[0] + wc[1] * y[1];
        };
        const Tensor dx = global_avg_pool_backward(x.shape(), wc);
        for (std::size_t i = 0; i < x.data.size(); ++i)
            CHECK(rel_err(dx.data[i], fd(loss, x.data[i])) < 1e-4);
    }
}

TEST_CASE("channel concat splits gradients exactly") {
    Rng rng(505);
    const Tensor a = random_tensor(3, 3, 2, rng);
    const Tensor b = random_tensor(3, 3, 1, rng);
    const Tensor y = concat_channels(a, b);
    REQUIRE(y.c == 3);
    CHECK(y.at(1, 2, 0) == a.at(1, 2, 0));
    CHECK(y.at(1, 2, 2) == b.at(1, 2, 0));
    auto [ga, gb] = split_channels(y, 2, 1);
    CHECK(ga == a);
    CHECK(gb == b);
}

TEST_CASE("perceptual pyramid distance behaves like a metric proxy") {
    Rng rng(606);
    PerceptualPyramid pyr(1, 4242);
    const Tensor a = random_tensor(16, 16, 1, rng, 0.0, 1.0);
    const Tensor b = random_tensor(16, 16, 1, rng, 0.0, 1.0);

    CHECK(pyr.distance(a, a) == 0.0);
    CHECK(pyr.distance(a, b) > 0.0);
    CHECK(pyr.distance(a, b) == doctest::Approx(pyr.distance(b, a)).epsilon(1e-12));

    // Same seed, same distance; different seed, (almost surely) different.
    PerceptualPyramid pyr2(1, 4242);
    CHECK(pyr.distance(a, b) == pyr2.distance(a, b));
    PerceptualPyramid pyr3(1, 4243);
    CHECK(pyr.distance(a, b) != pyr3.distance(a, b));

    // Monotone along the blend path a -> b.
    double prev = -1.0;
    for (double t : {0.0, 0.25, 0.5, 1.0}) {
        Tensor blend = a;
        for (std::size_t i = 0; i < blend.data.size(); ++i)
            blend.data[i] = (1.0 - t) * a.data[i] + t * b.data[i];
        const double d = pyr.distance(a, blend);
        CHECK(d >= prev);
        prev = d;
    }
}

TEST_CASE("perceptual pyramid gradient matches finite differences") {
    Rng rng(707);
    PerceptualPyramid pyr(1, 31, {2, 2, 2, 2});
    const Tensor a = random_tensor(8, 8, 1, rng, 0.0, 1.0);
    Tensor b = random_tensor(8, 8, 1, rng, 0.0, 1.0);
    const auto fa = pyr.features(a);

    Tensor db;
    const double d0 = pyr.distance_with_grad(fa, b, &db);
    CHECK(d0 == doctest::Approx(pyr.distance(a, b)).epsilon(1e-12));

    const auto loss = [&] { return pyr.distance(a, b); };
    for (std::size_t i = 0; i < b.data.size(); ++i)
        CHECK(rel_err(db.data[i], fd(loss, b.data[i])) < 1e-4);
}

TEST_CASE("adam minimizes a quadratic") {
    std::vector<double> x = {5.0, -3.0, 2.0};
    std::vector<double> g(3);
    Adam opt(3, 0.1);
    for (int it = 0; it < 2000; ++it) {
        for (int i = 0; i < 3; ++i) g[i] = 2.0 * (x[i] - 1.0);
        opt.step(x, g);
    }
    for (double v : x) CHECK(v == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("param store segments and init are deterministic") {
    ParamStore s1, s2;
    Conv2d c1(s1, 1, 2, 3, 1, 1);
    Conv2d c2(s2, 1, 2, 3, 1, 1);
    Rng r1(9), r2(9);
    c1.init_params(s1, r1);
    c2.init_params(s2, r2);
    CHECK(s1.values == s2.values);
    CHECK(s1.size() == c1.param_count());
    CHECK(s1.all_finite());
}
