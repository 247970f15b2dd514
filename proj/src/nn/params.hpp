#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "../rng.hpp"
#include "../types.hpp"

namespace dlove::nn {

// Flat parameter/gradient storage for one network. Layers reserve segments
// at construction time, so identical construction order gives identical
// layouts — which keeps checkpoints and seeding deterministic.
struct ParamStore {
    std::vector<double> values;
    std::vector<double> grads;

    std::size_t alloc(std::size_t n) {
        const std::size_t off = values.size();
        values.resize(off + n, 0.0);
        grads.resize(off + n, 0.0);
        return off;
    }

    std::size_t size() const { return values.size(); }
    void zero_grads() { std::fill(grads.begin(), grads.end(), 0.0); }

    bool all_finite() const {
        for (double v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

// Standard Adam over a flat vector; also reused for the attack's
// perturbation variable.
class Adam {
public:
    Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

    void step(std::vector<double>& values, const std::vector<double>& grads) {
        if (values.size() != m_.size() || grads.size() != m_.size())
            throw ShapeError("Adam::step: size mismatch");
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double g = grads[i];
            m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
            v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
            values[i] -= lr_ * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps_);
        }
    }

    double learning_rate() const { return lr_; }

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<double> m_, v_;
};

} // namespace dlove::nn
