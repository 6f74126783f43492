#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wsipipe/common.hpp"
#include "wsipipe/nn/layers.hpp"
#include "wsipipe/nn/tensor.hpp"
#include "wsipipe/rng.hpp"

namespace wsipipe::nn {

namespace detail {

template <typename S>
std::unique_ptr<Layer<S>> parse_layer(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("type"))
        throw ValidationError("arch: each layer must be an object with a \"type\"");
    const std::string type = j.at("type").get<std::string>();
    if (type == "conv")
        return std::make_unique<ConvLayer<S>>(j.at("out").get<int>(), j.at("k").get<int>(),
                                              j.value("s", 1), j.value("p", 0),
                                              j.value("bias", true));
    if (type == "relu") return std::make_unique<ReluLayer<S>>();
    if (type == "maxpool")
        return std::make_unique<MaxPoolLayer<S>>(j.at("k").get<int>(),
                                                 j.value("s", j.at("k").get<int>()));
    if (type == "batchnorm")
        return std::make_unique<BatchNormLayer<S>>(j.value("eps", 1e-5), j.value("momentum", 0.9));
    if (type == "dropout") return std::make_unique<DropoutLayer<S>>(j.at("rate").get<double>());
    if (type == "flatten") return std::make_unique<FlattenLayer<S>>();
    if (type == "gap") return std::make_unique<GlobalAvgPoolLayer<S>>();
    if (type == "fc") return std::make_unique<FullyConnectedLayer<S>>(j.at("out").get<int>());
    if (type == "residual") {
        std::vector<std::unique_ptr<Layer<S>>> inner;
        for (const auto& lj : j.at("layers")) inner.push_back(parse_layer<S>(lj));
        return std::make_unique<ResidualBlock<S>>(std::move(inner), j.value("projection", false));
    }
    throw ValidationError("arch: unknown layer type '" + type + "'");
}

} // namespace detail

// A feed-forward network built from an architecture description. Building
// draws initialization values from the given rng in declaration order, so a
// (arch, seed) pair fully determines the starting parameters.
template <typename S>
class Network {
public:
    Network(const nlohmann::json& arch, std::uint64_t init_seed) : arch_(arch) {
        if (!arch.is_object() || !arch.contains("input") || !arch.contains("layers"))
            throw ValidationError("arch: expected {\"input\": [c,h,w], \"layers\": [...]}");
        const auto in = arch.at("input").get<std::vector<int>>();
        if (in.size() != 3 || in[0] < 1 || in[1] < 1 || in[2] < 1)
            throw ValidationError("arch: input must be [channels, height, width], all >= 1");
        input_ = {in[0], in[1], in[2]};
        Rng init_rng(init_seed);
        Shape s = input_;
        for (const auto& lj : arch.at("layers")) {
            layers_.push_back(detail::parse_layer<S>(lj));
            try {
                s = layers_.back()->build(s, init_rng);
            } catch (const Error& e) {
                throw ValidationError("arch: layer " + std::to_string(layers_.size() - 1) + " (" +
                                      layers_.back()->type() + "): " + e.what());
            }
        }
        output_ = s;
        if (!(output_ == Shape{2, 1, 1}))
            throw ValidationError("arch: final output is " + output_.str() +
                                  ", expected 2x1x1 logits for the two classes");
    }

    Shape input_shape() const { return input_; }
    const nlohmann::json& arch() const { return arch_; }

    Tensor4<S> forward(const Tensor4<S>& x, bool train, Rng* dropout_rng = nullptr) {
        if (!(x.shape() == input_))
            throw ValidationError("forward: batch shape " + x.shape().str() +
                                  " does not match arch input " + input_.str());
        Tensor4<S> y = x;
        for (auto& l : layers_) y = l->forward(y, train, dropout_rng);
        return y;
    }

    Tensor4<S> backward(const Tensor4<S>& dlogits) {
        Tensor4<S> g = dlogits;
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
        return g;
    }

    std::vector<ParamRef<S>> params() {
        std::vector<ParamRef<S>> out;
        for (std::size_t i = 0; i < layers_.size(); ++i)
            layers_[i]->collect_params("l" + std::to_string(i), out);
        return out;
    }

    void zero_grad() {
        for (auto& l : layers_) l->zero_grad();
    }

private:
    nlohmann::json arch_;
    Shape input_;
    Shape output_;
    std::vector<std::unique_ptr<Layer<S>>> layers_;
};

// The default desk-scale architecture: one plain conv stage, one residual
// stage with a shortcut, then a widening conv into global average pooling.
inline nlohmann::json pilot_arch(int input_hw = 64) {
    return nlohmann::json{
        {"input", {3, input_hw, input_hw}},
        {"layers",
         {{{"type", "conv"}, {"out", 16}, {"k", 3}, {"s", 1}, {"p", 1}, {"bias", false}},
          {{"type", "batchnorm"}},
          {{"type", "relu"}},
          {{"type", "maxpool"}, {"k", 2}, {"s", 2}},
          {{"type", "residual"},
           {"projection", false},
           {"layers",
            {{{"type", "conv"}, {"out", 16}, {"k", 3}, {"s", 1}, {"p", 1}, {"bias", false}},
             {{"type", "batchnorm"}},
             {{"type", "relu"}},
             {{"type", "conv"}, {"out", 16}, {"k", 3}, {"s", 1}, {"p", 1}, {"bias", false}},
             {{"type", "batchnorm"}}}}},
          {{"type", "relu"}},
          {{"type", "maxpool"}, {"k", 2}, {"s", 2}},
          {{"type", "conv"}, {"out", 32}, {"k", 3}, {"s", 1}, {"p", 1}, {"bias", false}},
          {{"type", "batchnorm"}},
          {{"type", "relu"}},
          {{"type", "gap"}},
          {{"type", "fc"}, {"out", 2}}}}};
}

} // namespace wsipipe::nn
