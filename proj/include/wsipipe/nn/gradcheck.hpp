#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wsipipe/common.hpp"
#include "wsipipe/nn/loss.hpp"
#include "wsipipe/nn/network.hpp"
#include "wsipipe/rng.hpp"

namespace wsipipe::nn {

struct GradCheckReport {
    std::map<std::string, double> max_rel_err_by_layer; // parameter gradients, keyed by layer type
    double input_max_rel_err = 0.0;

    double overall() const {
        double m = input_max_rel_err;
        for (const auto& [_, v] : max_rel_err_by_layer) m = std::max(m, v);
        return m;
    }
};

namespace detail {

inline bool arch_has_dropout(const nlohmann::json& layers) {
    for (const auto& l : layers) {
        if (l.value("type", "") == "dropout") return true;
        if (l.contains("layers") && arch_has_dropout(l.at("layers"))) return true;
    }
    return false;
}

} // namespace detail

// Central-difference check of every parameter gradient and the input
// gradient on a random small batch, in 64-bit arithmetic. Dropout's
// stochastic mask is not a differentiable function of the seed, so archs
// containing dropout are rejected here (documented exclusion).
inline GradCheckReport grad_check(const nlohmann::json& arch, std::uint64_t seed,
                                  double epsilon = 1e-5, int batch = 2) {
    if (detail::arch_has_dropout(arch.at("layers")))
        throw ValidationError("grad-check: dropout layers are excluded from gradient checking "
                              "(stochastic mask); remove them from the arch");
    Network<double> net(arch, seed);

    std::size_t param_count = 0;
    for (const auto& p : net.params())
        if (p.trainable) param_count += p.value->size();
    if (param_count > 10000)
        throw ValidationError("grad-check: arch has " + std::to_string(param_count) +
                              " parameters, limit is 10000");

    Rng rng(derive_seed(seed, 1));
    Tensor4<double> x(batch, net.input_shape());
    for (auto& v : x.v) v = rng.normal();
    std::vector<int> labels(batch);
    for (auto& l : labels) l = static_cast<int>(rng.uniform_index(2));

    const auto loss_at = [&](const Tensor4<double>& input) {
        Tensor4<double> logits = net.forward(input, true, nullptr);
        return softmax_cross_entropy(logits, labels).loss;
    };

    // Analytic pass.
    net.zero_grad();
    Tensor4<double> logits = net.forward(x, true, nullptr);
    const auto loss = softmax_cross_entropy(logits, labels);
    const Tensor4<double> dx = net.backward(loss.dlogits);

    GradCheckReport report;
    const auto rel_err = [](double a, double n) {
        return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
    };

    for (auto& p : net.params()) {
        if (!p.trainable) continue;
        double worst = report.max_rel_err_by_layer.count(p.layer_type)
                           ? report.max_rel_err_by_layer[p.layer_type]
                           : 0.0;
        for (std::size_t i = 0; i < p.value->size(); ++i) {
            const double keep = (*p.value)[i];
            (*p.value)[i] = keep + epsilon;
            const double up = loss_at(x);
            (*p.value)[i] = keep - epsilon;
            const double down = loss_at(x);
            (*p.value)[i] = keep;
            const double numeric = (up - down) / (2.0 * epsilon);
            worst = std::max(worst, rel_err((*p.grad)[i], numeric));
        }
        report.max_rel_err_by_layer[p.layer_type] = worst;
    }

    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x.v[i];
        x.v[i] = keep + epsilon;
        const double up = loss_at(x);
        x.v[i] = keep - epsilon;
        const double down = loss_at(x);
        x.v[i] = keep;
        const double numeric = (up - down) / (2.0 * epsilon);
        report.input_max_rel_err = std::max(report.input_max_rel_err, rel_err(dx.v[i], numeric));
    }
    return report;
}

} // namespace wsipipe::nn
