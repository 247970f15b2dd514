#include "tensor.hpp"

namespace dlove {

bool is_valid_image(const Tensor& t) {
    if (t.empty()) return false;
    if (t.c != 1 && t.c != 3) return false;
    for (double v : t.data)
        if (!(v >= 0.0 && v <= 1.0)) return false; // also rejects NaN
    return true;
}

void require_valid_image(const Tensor& t, const char* what) {
    if (t.empty()) throw InvalidArgument(std::string(what) + ": empty image");
    if (t.c != 1 && t.c != 3)
        throw ShapeError(std::string(what) + ": channels must be 1 or 3, got " + std::to_string(t.c));
    for (double v : t.data) {
        if (!(v >= 0.0 && v <= 1.0))
            throw InvalidArgument(std::string(what) + ": pixel out of [0,1]");
    }
}

namespace {

Tensor resample(const Tensor& src, int out_h, int out_w, bool clamp01) {
    if (out_h <= 0 || out_w <= 0)
        throw InvalidArgument("resize: output dimensions must be positive");
    if (src.empty()) throw InvalidArgument("resize: empty input");

    Tensor dst(out_h, out_w, src.c);
    const double sy = static_cast<double>(src.h) / out_h;
    const double sx = static_cast<double>(src.w) / out_w;

    for (int y = 0; y < out_h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(src.h - 1));
        const int y0 = static_cast<int>(std::floor(fy));
        const int y1 = std::min(y0 + 1, src.h - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(src.w - 1));
            const int x0 = static_cast<int>(std::floor(fx));
            const int x1 = std::min(x0 + 1, src.w - 1);
            const double wx = fx - x0;
            for (int ch = 0; ch < src.c; ++ch) {
                const double top = src.at(y0, x0, ch) * (1.0 - wx) + src.at(y0, x1, ch) * wx;
                const double bot = src.at(y1, x0, ch) * (1.0 - wx) + src.at(y1, x1, ch) * wx;
                double v = top * (1.0 - wy) + bot * wy;
                if (clamp01) v = std::clamp(v, 0.0, 1.0);
                dst.at(y, x, ch) = v;
            }
        }
    }
    return dst;
}

} // namespace

Tensor resize_bilinear(const Tensor& src, int out_h, int out_w) {
    return resample(src, out_h, out_w, true);
}

Tensor resize_bilinear_raw(const Tensor& src, int out_h, int out_w) {
    return resample(src, out_h, out_w, false);
}

} // namespace dlove
