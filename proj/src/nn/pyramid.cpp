#include "pyramid.hpp"

namespace dlove::nn {

namespace {
constexpr double kStageEps = 1e-6;
constexpr double kSlope = 0.1;
} // namespace

PerceptualPyramid::PerceptualPyramid(int in_channels, Seed seed,
                                     std::array<int, 4> widths)
    : in_channels_(in_channels), widths_(widths) {
    if (in_channels != 1 && in_channels != 3)
        throw InvalidArgument("PerceptualPyramid: channels must be 1 or 3");
    int c = in_channels;
    for (int w : widths_) {
        stages_.emplace_back(store_, c, w, 3, 2, 1);
        c = w;
    }
    Rng rng(derive_seed(seed, "perceptual-pyramid"));
    for (const auto& stage : stages_) stage.init_params(store_, rng);
}

std::vector<Tensor> PerceptualPyramid::features(const Tensor& x) const {
    if (x.c != in_channels_)
        throw ShapeError("PerceptualPyramid: expected " + std::to_string(in_channels_) +
                         " channels, got " + std::to_string(x.c));
    std::vector<Tensor> feats;
    feats.reserve(stages_.size());
    Tensor cur = x;
    for (const auto& stage : stages_) {
        cur = leaky_relu(stage.forward(store_, cur), kSlope);
        feats.push_back(cur);
    }
    return feats;
}

namespace {

// d = mean((fa-fb)^2) / (mean(fa^2) + mean(fb^2) + eps), symmetric and 0
// iff the feature maps coincide.
double stage_distance(const Tensor& fa, const Tensor& fb, double* num_out,
                      double* den_out) {
    double num = 0.0, ea = 0.0, eb = 0.0;
    for (std::size_t i = 0; i < fa.data.size(); ++i) {
        const double d = fa.data[i] - fb.data[i];
        num += d * d;
        ea += fa.data[i] * fa.data[i];
        eb += fb.data[i] * fb.data[i];
    }
    const double n = static_cast<double>(fa.data.size());
    const double den = ea / n + eb / n + kStageEps;
    if (num_out) *num_out = num / n;
    if (den_out) *den_out = den;
    return (num / n) / den;
}

} // namespace

double PerceptualPyramid::distance(const Tensor& a, const Tensor& b) const {
    if (a.shape() != b.shape())
        throw ShapeError("PerceptualPyramid::distance: shape mismatch");
    const auto fa = features(a);
    const auto fb = features(b);
    double total = 0.0;
    for (std::size_t s = 0; s < fa.size(); ++s)
        total += stage_distance(fa[s], fb[s], nullptr, nullptr);
    return total / static_cast<double>(fa.size());
}

double PerceptualPyramid::distance_with_grad(const std::vector<Tensor>& feats_a,
                                             const Tensor& b, Tensor* db) const {
    if (feats_a.size() != stages_.size())
        throw ShapeError("PerceptualPyramid: cached feature count mismatch");

    // Forward pass on b, saving stage inputs (pre-conv) and pre-activations.
    std::vector<Tensor> inputs, preacts, fb;
    Tensor cur = b;
    for (const auto& stage : stages_) {
        inputs.push_back(cur);
        Tensor pre = stage.forward(store_, cur);
        preacts.push_back(pre);
        cur = leaky_relu(pre, kSlope);
        fb.push_back(cur);
    }

    const double n_stages = static_cast<double>(stages_.size());
    double total = 0.0;
    std::vector<Tensor> stage_grads(stages_.size());
    for (std::size_t s = 0; s < stages_.size(); ++s) {
        double num, den;
        total += stage_distance(feats_a[s], fb[s], &num, &den);
        if (!db) continue;
        // d(num/den)/dfb_i with num, den both functions of fb.
        Tensor g(fb[s].shape());
        const double n = static_cast<double>(fb[s].data.size());
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            const double diff = fb[s].data[i] - feats_a[s].data[i];
            g.data[i] = ((2.0 * diff / n) / den -
                         num * (2.0 * fb[s].data[i] / n) / (den * den)) /
                        n_stages;
        }
        stage_grads[s] = std::move(g);
    }

    if (db) {
        // Walk the chain backwards, folding in each stage's direct gradient.
        Tensor g = std::move(stage_grads.back());
        for (std::size_t s = stages_.size(); s-- > 0;) {
            Tensor gpre = leaky_relu_backward(preacts[s], g, kSlope);
            Tensor gin = stages_[s].backward(store_, inputs[s], gpre, nullptr);
            if (s == 0) {
                *db = std::move(gin);
            } else {
                g = std::move(gin);
                for (std::size_t i = 0; i < g.data.size(); ++i)
                    g.data[i] += stage_grads[s - 1].data[i];
            }
        }
    }
    return total / n_stages;
}

} // namespace dlove::nn
