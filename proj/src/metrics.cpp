#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>

#include "attack.hpp"
#include "nn/pyramid.hpp"

namespace dlove {

namespace {

void require_same_shape(const Image& a, const Image& b, const char* what) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(what) + ": shapes " + a.shape().str() +
                         " and " + b.shape().str() + " do not match");
}

void require_valid_pair(const Image& a, const Image& b, const char* what) {
    if (a.empty() || b.empty())
        throw InvalidArgument(std::string(what) + ": empty image");
    require_same_shape(a, b, what);
}

} // namespace

double mse(const Image& a, const Image& b) {
    require_valid_pair(a, b, "mse");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.data.size());
}

double psnr(const Image& a, const Image& b) {
    const double m = mse(a, b);
    if (m < 1e-10)
        return 100.0;
    return 10.0 * std::log10(1.0 / m);
}

double ssim(const Image& a, const Image& b) {
    require_valid_pair(a, b, "ssim");
    constexpr int kWindow = 8;
    constexpr double kC1 = 0.01 * 0.01;
    constexpr double kC2 = 0.03 * 0.03;
    if (a.h < kWindow || a.w < kWindow)
        throw InvalidArgument("ssim: image " + a.shape().str() +
                              " is smaller than the 8x8 window");
    constexpr double inv_n = 1.0 / (kWindow * kWindow);
    double total = 0.0;
    long long windows = 0;
    for (int ch = 0; ch < a.c; ++ch) {
        for (int y = 0; y + kWindow <= a.h; ++y) {
            for (int x = 0; x + kWindow <= a.w; ++x) {
                double sa = 0.0, sb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
                for (int dy = 0; dy < kWindow; ++dy) {
                    for (int dx = 0; dx < kWindow; ++dx) {
                        const double va = a.at(y + dy, x + dx, ch);
                        const double vb = b.at(y + dy, x + dx, ch);
                        sa += va;
                        sb += vb;
                        saa += va * va;
                        sbb += vb * vb;
                        sab += va * vb;
                    }
                }
                const double mu_a = sa * inv_n;
                const double mu_b = sb * inv_n;
                const double var_a = saa * inv_n - mu_a * mu_a;
                const double var_b = sbb * inv_n - mu_b * mu_b;
                const double cov = sab * inv_n - mu_a * mu_b;
                const double num = (2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2);
                const double den =
                    (mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2);
                total += num / den;
                ++windows;
            }
        }
    }
    return total / static_cast<double>(windows);
}

double lpips_proxy(const Image& a, const Image& b, Seed pyramid_seed) {
    require_valid_pair(a, b, "lpips_proxy");
    // One pyramid per (seed, channel count), built on first use and read-only
    // afterwards, so concurrent metric evaluation stays lock-free past the
    // lookup.
    static std::mutex mu;
    static std::map<std::pair<Seed, int>, std::unique_ptr<nn::PerceptualPyramid>>
        cache;
    const nn::PerceptualPyramid* pyramid = nullptr;
    {
        std::lock_guard<std::mutex> lock(mu);
        auto& slot = cache[{pyramid_seed, a.c}];
        if (!slot)
            slot = std::make_unique<nn::PerceptualPyramid>(a.c, pyramid_seed);
        pyramid = slot.get();
    }
    return pyramid->distance(a, b);
}

double ber(const Watermark& a, const Watermark& b) {
    a.validate("ber");
    b.validate("ber");
    if (!a.is_bits() || !b.is_bits())
        throw InvalidArgument("ber: both payloads must be bit strings");
    if (a.bits.size() != b.bits.size())
        throw ShapeError("ber: payload lengths " + std::to_string(a.bits.size()) +
                         " and " + std::to_string(b.bits.size()) + " do not match");
    std::size_t differing = 0;
    for (std::size_t i = 0; i < a.bits.size(); ++i)
        differing += a.bits[i] != b.bits[i];
    return static_cast<double>(differing) / static_cast<double>(a.bits.size());
}

double cosine_similarity(const Watermark& a, const Watermark& b) {
    a.validate("cosine_similarity");
    b.validate("cosine_similarity");
    if (a.kind != b.kind)
        throw InvalidArgument("cosine_similarity: payload kinds do not match");
    if (a.is_bits()) {
        if (a.bits.size() != b.bits.size())
            throw ShapeError("cosine_similarity: payload lengths " +
                             std::to_string(a.bits.size()) + " and " +
                             std::to_string(b.bits.size()) + " do not match");
        // {0,1} -> {-1,+1}: all entries are unit-magnitude, so the cosine is
        // just the mean sign agreement.
        double dot = 0.0;
        for (std::size_t i = 0; i < a.bits.size(); ++i)
            dot += (a.bits[i] ? 1.0 : -1.0) * (b.bits[i] ? 1.0 : -1.0);
        return dot / static_cast<double>(a.bits.size());
    }
    require_same_shape(a.image, b.image, "cosine_similarity");
    const std::size_t n = a.image.data.size();
    double mean_a = 0.0, mean_b = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mean_a += a.image.data[i];
        mean_b += b.image.data[i];
    }
    mean_a /= static_cast<double>(n);
    mean_b /= static_cast<double>(n);
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double va = a.image.data[i] - mean_a;
        const double vb = b.image.data[i] - mean_b;
        dot += va * vb;
        na += va * va;
        nb += vb * vb;
    }
    // Constant images have no direction: a pair of them is a perfect match,
    // a constant against a varying image matches nothing.
    if (na < 1e-30 && nb < 1e-30)
        return 1.0;
    if (na < 1e-30 || nb < 1e-30)
        return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

Image residual(const Image& cover, const Image& attacked, double gain) {
    require_valid_pair(cover, attacked, "residual");
    if (!(gain > 0.0))
        throw InvalidArgument("residual: gain must be > 0, got " +
                              std::to_string(gain));
    Image out(cover.h, cover.w, cover.c);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const double v = 0.5 + gain * (attacked.data[i] - cover.data[i]);
        out.data[i] = std::clamp(v, 0.0, 1.0);
    }
    return out;
}

AggregateReport aggregate(const std::vector<AttackResult>& results) {
    if (results.empty())
        throw InvalidArgument("aggregate: no attack results");
    AggregateReport report;
    report.count = static_cast<int>(results.size());
    int successes = 0;
    int removals = 0;
    for (const AttackResult& r : results) {
        successes += r.success ? 1 : 0;
        removals += r.removal ? 1 : 0;
        report.means.psnr += r.metrics.psnr;
        report.means.ssim += r.metrics.ssim;
        report.means.lpips_proxy += r.metrics.lpips_proxy;
        report.means.mse += r.metrics.mse;
        report.means.ber += r.metrics.ber;
        report.means.cosine += r.metrics.cosine;
    }
    const double n = static_cast<double>(results.size());
    report.means.psnr /= n;
    report.means.ssim /= n;
    report.means.lpips_proxy /= n;
    report.means.mse /= n;
    report.means.ber /= n;
    report.means.cosine /= n;
    report.asr = 100.0 * static_cast<double>(successes) / n;
    report.removal_rate = 100.0 * static_cast<double>(removals) / n;
    return report;
}

} // namespace dlove
