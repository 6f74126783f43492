#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "wsipipe/common.hpp"
#include "wsipipe/nn/layers.hpp"

namespace wsipipe::nn {

struct AdamConfig {
    double lr = 1e-5;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    // Coupled L2 (decay added to the gradient before the moments) is the
    // default; decoupled applies the decay directly to the parameter.
    bool decoupled_weight_decay = false;
};

// Moments are kept in double so the update math is identical whether the
// parameters themselves are float or double.
template <typename S>
class Adam {
public:
    Adam(std::vector<ParamRef<S>> params, const AdamConfig& cfg) : params_(std::move(params)), cfg_(cfg) {
        for (const auto& p : params_) {
            if (!p.trainable) continue;
            m_.emplace_back(p.value->size(), 0.0);
            v_.emplace_back(p.value->size(), 0.0);
        }
    }

    std::int64_t step_count() const { return t_; }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        std::size_t slot = 0;
        for (auto& p : params_) {
            if (!p.trainable) continue;
            std::vector<double>& m = m_[slot];
            std::vector<double>& v = v_[slot];
            ++slot;
            std::vector<S>& w = *p.value;
            const std::vector<S>& g = *p.grad;
            for (std::size_t i = 0; i < w.size(); ++i) {
                double grad = static_cast<double>(g[i]);
                if (!cfg_.decoupled_weight_decay) grad += cfg_.weight_decay * static_cast<double>(w[i]);
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * grad;
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * grad * grad;
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                double next = static_cast<double>(w[i]) - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
                if (cfg_.decoupled_weight_decay)
                    next -= cfg_.lr * cfg_.weight_decay * static_cast<double>(w[i]);
                w[i] = static_cast<S>(next);
            }
        }
    }

private:
    std::vector<ParamRef<S>> params_;
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    std::int64_t t_ = 0;
};

} // namespace wsipipe::nn
