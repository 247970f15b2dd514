#pragma once

#include "../tensor.hpp"
#include "params.hpp"

namespace dlove::nn {

// Layers hold offsets into an external ParamStore and no activation state;
// forward/backward take everything they need as arguments, so a frozen
// network can run on many threads at once. backward() returns the gradient
// with respect to the layer input and, when `gstore` is non-null,
// accumulates parameter gradients into gstore->grads (pass nullptr for
// input-gradient-only passes such as perturbation crafting).

// 2-D convolution via im2col + GEMM. Weight layout: [out_c][k][k][in_c].
struct Conv2d {
    int in_c = 0, out_c = 0, k = 0, stride = 1, pad = 0;
    std::size_t w_off = 0, b_off = 0;

    Conv2d() = default;
    Conv2d(ParamStore& store, int in_channels, int out_channels, int kernel,
           int stride_, int pad_);

    std::size_t param_count() const {
        return static_cast<std::size_t>(out_c) * k * k * in_c + out_c;
    }
    void init_params(ParamStore& store, Rng& rng, double scale = 1.0) const;
    Shape out_shape(const Shape& in) const;

    Tensor forward(const ParamStore& store, const Tensor& x) const;
    Tensor backward(const ParamStore& store, const Tensor& x, const Tensor& gout,
                    ParamStore* gstore) const;
};

// Fully connected layer on a flattened tensor. Weight layout: [out][in].
struct Linear {
    int in_n = 0, out_n = 0;
    std::size_t w_off = 0, b_off = 0;

    Linear() = default;
    Linear(ParamStore& store, int in_features, int out_features);

    void init_params(ParamStore& store, Rng& rng, double scale = 1.0) const;

    std::vector<double> forward(const ParamStore& store, const std::vector<double>& x) const;
    std::vector<double> backward(const ParamStore& store, const std::vector<double>& x,
                                 const std::vector<double>& gout, ParamStore* gstore) const;
};

// Elementwise activations (stateless; backward takes the saved input).
Tensor leaky_relu(const Tensor& x, double slope = 0.1);
Tensor leaky_relu_backward(const Tensor& x, const Tensor& gout, double slope = 0.1);
Tensor tanh_forward(const Tensor& x);
Tensor tanh_backward(const Tensor& x, const Tensor& gout);
Tensor sigmoid_forward(const Tensor& x);
Tensor sigmoid_backward(const Tensor& x, const Tensor& gout);

// Nearest-neighbor 2x upsampling.
Tensor upsample2x(const Tensor& x);
Tensor upsample2x_backward(const Tensor& gout);

// Global average pool to a per-channel vector.
std::vector<double> global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Shape& in_shape, const std::vector<double>& gout);

// Channel concatenation a ++ b and the matching gradient split.
Tensor concat_channels(const Tensor& a, const Tensor& b);
std::pair<Tensor, Tensor> split_channels(const Tensor& g, int c_a, int c_b);

} // namespace dlove::nn
