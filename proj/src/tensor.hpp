#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "types.hpp"

namespace dlove {

// Dense H x W x C array of doubles, channel-fastest (HWC) layout.
// Images are Tensors whose entries lie in [0, 1]; intermediate network
// activations use the same type without the range restriction.
struct Tensor {
    int h = 0;
    int w = 0;
    int c = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int height, int width, int channels)
        : h(height), w(width), c(channels),
          data(checked_size(height, width, channels), 0.0) {}
    explicit Tensor(Shape s) : Tensor(s.h, s.w, s.c) {}

    static std::size_t checked_size(int height, int width, int channels) {
        if (height <= 0 || width <= 0 || channels <= 0)
            throw InvalidArgument("Tensor: dimensions must be positive");
        return static_cast<std::size_t>(height) * width * channels;
    }

    Shape shape() const { return {h, w, c}; }
    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    double& at(int y, int x, int ch) {
        return data[(static_cast<std::size_t>(y) * w + x) * c + ch];
    }
    double at(int y, int x, int ch) const {
        return data[(static_cast<std::size_t>(y) * w + x) * c + ch];
    }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    double min() const { return data.empty() ? 0.0 : *std::min_element(data.begin(), data.end()); }
    double max() const { return data.empty() ? 0.0 : *std::max_element(data.begin(), data.end()); }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    Tensor& clamp01() {
        for (double& v : data) v = std::clamp(v, 0.0, 1.0);
        return *this;
    }

    bool operator==(const Tensor& o) const {
        return h == o.h && w == o.w && c == o.c && data == o.data;
    }
};

// An Image is a Tensor with every entry finite and in [0, 1].
using Image = Tensor;

bool is_valid_image(const Tensor& t);
// Throws ShapeError / InvalidArgument when `t` is not a valid Image.
void require_valid_image(const Tensor& t, const char* what);

// Bilinear resize with the half-pixel (corner-aligned-off) convention:
// src_x = (dst_x + 0.5) * (src_w / dst_w) - 0.5, coordinates clamped to the
// source rectangle. Resizing to the identical shape reproduces the input
// exactly; outputs are clamped to [0, 1].
Tensor resize_bilinear(const Tensor& src, int out_h, int out_w);

// Same resampling, but without the [0,1] clamp; used on gradient tensors.
Tensor resize_bilinear_raw(const Tensor& src, int out_h, int out_w);

} // namespace dlove
