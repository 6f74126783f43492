#pragma once

#include <cmath>
#include <vector>

#include "wsipipe/common.hpp"
#include "wsipipe/nn/tensor.hpp"

namespace wsipipe::nn {

template <typename S>
struct LossResult {
    double loss = 0.0;     // mean over the batch of -ln p(label)
    Tensor4<S> dlogits;    // (softmax - onehot) / batch
    std::vector<double> prob_class1; // softmax probability of class 1 per sample
};

// Softmax cross-entropy over the two classes, stabilized by max
// subtraction. Probabilities are computed in double regardless of S.
template <typename S>
LossResult<S> softmax_cross_entropy(const Tensor4<S>& logits, const std::vector<int>& labels) {
    if (logits.c < 2 || logits.h != 1 || logits.w != 1)
        throw ValidationError("loss: logits must be (batch, classes, 1, 1)");
    if (labels.size() != static_cast<std::size_t>(logits.n))
        throw ValidationError("loss: batch has " + std::to_string(logits.n) + " samples but " +
                              std::to_string(labels.size()) + " labels");
    const int classes = logits.c;
    LossResult<S> out;
    out.dlogits = Tensor4<S>(logits.n, classes, 1, 1);
    out.prob_class1.resize(logits.n);
    double total = 0.0;
    std::vector<double> p(classes);
    for (int n = 0; n < logits.n; ++n) {
        const int label = labels[n];
        if (label < 0 || label >= classes)
            throw ValidationError("loss: label " + std::to_string(label) + " out of range");
        double mx = static_cast<double>(logits.at(n, 0, 0, 0));
        for (int c = 1; c < classes; ++c)
            mx = std::max(mx, static_cast<double>(logits.at(n, c, 0, 0)));
        double z = 0.0;
        for (int c = 0; c < classes; ++c) {
            p[c] = std::exp(static_cast<double>(logits.at(n, c, 0, 0)) - mx);
            z += p[c];
        }
        for (int c = 0; c < classes; ++c) p[c] /= z;
        total += -std::log(p[label]);
        out.prob_class1[n] = p[1];
        for (int c = 0; c < classes; ++c)
            out.dlogits.at(n, c, 0, 0) =
                static_cast<S>((p[c] - (c == label ? 1.0 : 0.0)) / logits.n);
    }
    out.loss = total / logits.n;
    return out;
}

// Infer-mode helper: softmax probability of class 1 for every sample.
template <typename S>
std::vector<double> softmax_class1(const Tensor4<S>& logits) {
    std::vector<double> out(logits.n);
    for (int n = 0; n < logits.n; ++n) {
        const double a = static_cast<double>(logits.at(n, 0, 0, 0));
        const double b = static_cast<double>(logits.at(n, 1, 0, 0));
        const double mx = std::max(a, b);
        const double ea = std::exp(a - mx), eb = std::exp(b - mx);
        out[n] = eb / (ea + eb);
    }
    return out;
}

} // namespace wsipipe::nn
