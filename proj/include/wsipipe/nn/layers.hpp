#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "wsipipe/common.hpp"
#include "wsipipe/nn/tensor.hpp"
#include "wsipipe/rng.hpp"

namespace wsipipe::nn {

// Named view of one parameter (or state) array and its gradient buffer.
// Non-trainable entries (batch-norm running statistics) are serialized but
// skipped by the optimizer.
template <typename S>
struct ParamRef {
    std::string name;
    std::string layer_type;
    std::vector<S>* value = nullptr;
    std::vector<S>* grad = nullptr; // null for non-trainable state
    bool trainable = true;
};

template <typename S>
class Layer {
public:
    virtual ~Layer() = default;
    virtual std::string type() const = 0;

    // Shape propagation and parameter allocation; called once before use.
    virtual Shape build(Shape in, Rng& init_rng) = 0;

    virtual Tensor4<S> forward(const Tensor4<S>& x, bool train, Rng* dropout_rng) = 0;
    // Uses the cache from the latest train-mode forward; accumulates
    // parameter gradients and returns the input gradient.
    virtual Tensor4<S> backward(const Tensor4<S>& dy) = 0;

    virtual void collect_params(const std::string& prefix, std::vector<ParamRef<S>>& out) {}
    virtual void zero_grad() {}
};

template <typename S>
class ConvLayer final : public Layer<S> {
public:
    // A conv feeding a batchnorm should carry no bias: the normalization
    // cancels any constant channel shift, leaving an exactly-zero gradient.
    ConvLayer(int out_channels, int kernel, int stride, int pad, bool bias = true)
        : out_c_(out_channels), k_(kernel), s_(stride), p_(pad), has_bias_(bias) {
        if (out_channels < 1 || kernel < 1 || stride < 1 || pad < 0)
            throw ValidationError("conv: out>=1, k>=1, s>=1, p>=0 required");
    }

    std::string type() const override { return "conv"; }

    Shape build(Shape in, Rng& init_rng) override {
        in_ = in;
        if (in.h + 2 * p_ < k_ || in.w + 2 * p_ < k_)
            throw ValidationError("conv: kernel " + std::to_string(k_) + " exceeds padded input " +
                                  in.str());
        out_h_ = (in.h + 2 * p_ - k_) / s_ + 1;
        out_w_ = (in.w + 2 * p_ - k_) / s_ + 1;
        weight_.resize(static_cast<std::size_t>(out_c_) * in.c * k_ * k_);
        bias_.assign(out_c_, S(0));
        const double he = std::sqrt(2.0 / (static_cast<double>(in.c) * k_ * k_));
        for (auto& w : weight_) w = static_cast<S>(init_rng.normal() * he);
        dweight_.assign(weight_.size(), S(0));
        dbias_.assign(bias_.size(), S(0));
        return {out_c_, out_h_, out_w_};
    }

    Tensor4<S> forward(const Tensor4<S>& x, bool train, Rng*) override {
        if (train) x_ = x;
        Tensor4<S> y(x.n, out_c_, out_h_, out_w_);
        const int in_c = in_.c;
        for (int n = 0; n < x.n; ++n)
            for (int oc = 0; oc < out_c_; ++oc)
                for (int oy = 0; oy < out_h_; ++oy) {
                    const int iy0 = oy * s_ - p_;
                    const int ky_lo = std::max(0, -iy0);
                    const int ky_hi = std::min(k_, in_.h - iy0);
                    for (int ox = 0; ox < out_w_; ++ox) {
                        const int ix0 = ox * s_ - p_;
                        const int kx_lo = std::max(0, -ix0);
                        const int kx_hi = std::min(k_, in_.w - ix0);
                        S acc = bias_[oc];
                        for (int ic = 0; ic < in_c; ++ic)
                            for (int ky = ky_lo; ky < ky_hi; ++ky) {
                                const S* xrow = &x.v[x.index(n, ic, iy0 + ky, ix0 + kx_lo)];
                                const S* wrow =
                                    &weight_[widx(oc, ic, ky, kx_lo)];
                                for (int kx = 0; kx < kx_hi - kx_lo; ++kx)
                                    acc += wrow[kx] * xrow[kx];
                            }
                        y.at(n, oc, oy, ox) = acc;
                    }
                }
        return y;
    }

    Tensor4<S> backward(const Tensor4<S>& dy) override {
        if (x_.size() == 0) throw Error("conv: backward without cached forward");
        Tensor4<S> dx(x_.n, in_.c, in_.h, in_.w);
        for (int n = 0; n < dy.n; ++n)
            for (int oc = 0; oc < out_c_; ++oc)
                for (int oy = 0; oy < out_h_; ++oy) {
                    const int iy0 = oy * s_ - p_;
                    const int ky_lo = std::max(0, -iy0);
                    const int ky_hi = std::min(k_, in_.h - iy0);
                    for (int ox = 0; ox < out_w_; ++ox) {
                        const int ix0 = ox * s_ - p_;
                        const int kx_lo = std::max(0, -ix0);
                        const int kx_hi = std::min(k_, in_.w - ix0);
                        const S g = dy.at(n, oc, oy, ox);
                        dbias_[oc] += g;
                        for (int ic = 0; ic < in_.c; ++ic)
                            for (int ky = ky_lo; ky < ky_hi; ++ky) {
                                const S* xrow = &x_.v[x_.index(n, ic, iy0 + ky, ix0 + kx_lo)];
                                S* dxrow = &dx.v[dx.index(n, ic, iy0 + ky, ix0 + kx_lo)];
                                S* dwrow = &dweight_[widx(oc, ic, ky, kx_lo)];
                                const S* wrow = &weight_[widx(oc, ic, ky, kx_lo)];
                                for (int kx = 0; kx < kx_hi - kx_lo; ++kx) {
                                    dwrow[kx] += g * xrow[kx];
                                    dxrow[kx] += g * wrow[kx];
                                }
                            }
                    }
                }
        return dx;
    }

    void collect_params(const std::string& prefix, std::vector<ParamRef<S>>& out) override {
        out.push_back({prefix + ".weight", type(), &weight_, &dweight_, true});
        if (has_bias_) out.push_back({prefix + ".bias", type(), &bias_, &dbias_, true});
    }

    void zero_grad() override {
        std::fill(dweight_.begin(), dweight_.end(), S(0));
        std::fill(dbias_.begin(), dbias_.end(), S(0));
    }

private:
    std::size_t widx(int oc, int ic, int ky, int kx) const {
        return ((static_cast<std::size_t>(oc) * in_.c + ic) * k_ + ky) * k_ + kx;
    }

    int out_c_, k_, s_, p_;
    bool has_bias_;
    Shape in_;
    int out_h_ = 0, out_w_ = 0;
    std::vector<S> weight_, bias_, dweight_, dbias_;
    Tensor4<S> x_;
};

template <typename S>
class ReluLayer final : public Layer<S> {
public:
    std::string type() const override { return "relu"; }
    Shape build(Shape in, Rng&) override { return in; }

    Tensor4<S> forward(const Tensor4<S>& x, bool train, Rng*) override {
        Tensor4<S> y = x;
        for (auto& v : y.v) v = v > S(0) ? v : S(0);
        if (train) {
            mask_.resize(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) mask_[i] = x.v[i] > S(0);
        }
        return y;
    }

    Tensor4<S> backward(const Tensor4<S>& dy) override {
        if (mask_.size() != dy.size()) throw Error("relu: backward without cached forward");
        Tensor4<S> dx = dy;
        for (std::size_t i = 0; i < dx.size(); ++i)
            if (!mask_[i]) dx.v[i] = S(0);
        return dx;
    }

private:
    std::vector<char> mask_;
};

template <typename S>
class MaxPoolLayer final : public Layer<S> {
public:
    MaxPoolLayer(int kernel, int stride) : k_(kernel), s_(stride) {
        if (kernel < 1 || stride < 1) throw ValidationError("maxpool: k>=1 and s>=1 required");
    }

    std::string type() const override { return "maxpool"; }

    Shape build(Shape in, Rng&) override {
        if (in.h < k_ || in.w < k_)
            throw ValidationError("maxpool: kernel " + std::to_string(k_) + " exceeds input " + in.str());
        in_ = in;
        out_h_ = (in.h - k_) / s_ + 1;
        out_w_ = (in.w - k_) / s_ + 1;
        return {in.c, out_h_, out_w_};
    }

    Tensor4<S> forward(const Tensor4<S>& x, bool train, Rng*) override {
        Tensor4<S> y(x.n, in_.c, out_h_, out_w_);
        if (train) argmax_.assign(y.size(), 0);
        for (int n = 0; n < x.n; ++n)
            for (int c = 0; c < in_.c; ++c)
                for (int oy = 0; oy < out_h_; ++oy)
                    for (int ox = 0; ox < out_w_; ++ox) {
                        // Ties keep the first maximal element in row-major scan order.
                        std::size_t best_idx = x.index(n, c, oy * s_, ox * s_);
                        S best = x.v[best_idx];
                        for (int ky = 0; ky < k_; ++ky)
                            for (int kx = 0; kx < k_; ++kx) {
                                const std::size_t idx = x.index(n, c, oy * s_ + ky, ox * s_ + kx);
                                if (x.v[idx] > best) {
                                    best = x.v[idx];
                                    best_idx = idx;
                                }
                            }
                        y.at(n, c, oy, ox) = best;
                        if (train) argmax_[y.index(n, c, oy, ox)] = best_idx;
                    }
        return y;
    }

    Tensor4<S> backward(const Tensor4<S>& dy) override {
        if (argmax_.size() != dy.size()) throw Error("maxpool: backward without cached forward");
        Tensor4<S> dx(dy.n, in_.c, in_.h, in_.w);
        for (std::size_t i = 0; i < dy.size(); ++i) dx.v[argmax_[i]] += dy.v[i];
        return dx;
    }

private:
    int k_, s_;
    Shape in_;
    int out_h_ = 0, out_w_ = 0;
    std::vector<std::size_t> argmax_;
};

template <typename S>
class BatchNormLayer final : public Layer<S> {
public:
    explicit BatchNormLayer(double epsilon = 1e-5, double momentum = 0.9)
        : eps_(epsilon), momentum_(momentum) {}

    std::string type() const override { return "batchnorm"; }

    Shape build(Shape in, Rng&) override {
        in_ = in;
        gamma_.assign(in.c, S(1));
        beta_.assign(in.c, S(0));
        running_mean_.assign(in.c, S(0));
        running_var_.assign(in.c, S(1));
        dgamma_.assign(in.c, S(0));
        dbeta_.assign(in.c, S(0));
        return in;
    }

    Tensor4<S> forward(const Tensor4<S>& x, bool train, Rng*) override {
        Tensor4<S> y(x.n, x.c, x.h, x.w);
        const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
        if (train) {
            const double m = static_cast<double>(x.n) * plane;
            batch_mean_.assign(x.c, 0.0);
            batch_var_.assign(x.c, 0.0);
            for (int n = 0; n < x.n; ++n)
                for (int c = 0; c < x.c; ++c) {
                    const S* src = &x.v[x.index(n, c, 0, 0)];
                    double acc = 0.0;
                    for (std::size_t i = 0; i < plane; ++i) acc += static_cast<double>(src[i]);
                    batch_mean_[c] += acc;
                }
            for (int c = 0; c < x.c; ++c) batch_mean_[c] /= m;
            for (int n = 0; n < x.n; ++n)
                for (int c = 0; c < x.c; ++c) {
                    const S* src = &x.v[x.index(n, c, 0, 0)];
                    double acc = 0.0;
                    for (std::size_t i = 0; i < plane; ++i) {
                        const double d = static_cast<double>(src[i]) - batch_mean_[c];
                        acc += d * d;
                    }
                    batch_var_[c] += acc;
                }
            for (int c = 0; c < x.c; ++c) batch_var_[c] /= m; // biased
            inv_std_.resize(x.c);
            for (int c = 0; c < x.c; ++c) inv_std_[c] = 1.0 / std::sqrt(batch_var_[c] + eps_);
            for (int c = 0; c < x.c; ++c) {
                running_mean_[c] = static_cast<S>(momentum_ * static_cast<double>(running_mean_[c]) +
                                                  (1.0 - momentum_) * batch_mean_[c]);
                running_var_[c] = static_cast<S>(momentum_ * static_cast<double>(running_var_[c]) +
                                                 (1.0 - momentum_) * batch_var_[c]);
            }
            xhat_.resize(x.size());
            for (int n = 0; n < x.n; ++n)
                for (int c = 0; c < x.c; ++c) {
                    const S* src = &x.v[x.index(n, c, 0, 0)];
                    S* dst = &y.v[y.index(n, c, 0, 0)];
                    double* xh = &xhat_[x.index(n, c, 0, 0)];
                    for (std::size_t i = 0; i < plane; ++i) {
                        xh[i] = (static_cast<double>(src[i]) - batch_mean_[c]) * inv_std_[c];
                        dst[i] = static_cast<S>(static_cast<double>(gamma_[c]) * xh[i] +
                                                static_cast<double>(beta_[c]));
                    }
                }
        } else {
            for (int n = 0; n < x.n; ++n)
                for (int c = 0; c < x.c; ++c) {
                    const double inv = 1.0 / std::sqrt(static_cast<double>(running_var_[c]) + eps_);
                    const double mu = static_cast<double>(running_mean_[c]);
                    const S* src = &x.v[x.index(n, c, 0, 0)];
                    S* dst = &y.v[y.index(n, c, 0, 0)];
                    for (std::size_t i = 0; i < plane; ++i)
                        dst[i] = static_cast<S>(static_cast<double>(gamma_[c]) *
                                                    (static_cast<double>(src[i]) - mu) * inv +
                                                static_cast<double>(beta_[c]));
                }
        }
        return y;
    }

    // Full train-mode backward through the batch statistics.
    Tensor4<S> backward(const Tensor4<S>& dy) override {
        if (xhat_.size() != dy.size()) throw Error("batchnorm: backward without cached forward");
        Tensor4<S> dx(dy.n, dy.c, dy.h, dy.w);
        const std::size_t plane = static_cast<std::size_t>(dy.h) * dy.w;
        const double m = static_cast<double>(dy.n) * plane;
        for (int c = 0; c < dy.c; ++c) {
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (int n = 0; n < dy.n; ++n) {
                const S* g = &dy.v[dy.index(n, c, 0, 0)];
                const double* xh = &xhat_[dy.index(n, c, 0, 0)];
                for (std::size_t i = 0; i < plane; ++i) {
                    sum_dy += static_cast<double>(g[i]);
                    sum_dy_xhat += static_cast<double>(g[i]) * xh[i];
                }
            }
            dbeta_[c] += static_cast<S>(sum_dy);
            dgamma_[c] += static_cast<S>(sum_dy_xhat);
            // dx = gamma/std * (dy - mean(dy) - xhat * mean(dy*xhat))
            const double scale = static_cast<double>(gamma_[c]) * inv_std_[c];
            for (int n = 0; n < dy.n; ++n) {
                const S* g = &dy.v[dy.index(n, c, 0, 0)];
                const double* xh = &xhat_[dy.index(n, c, 0, 0)];
                S* d = &dx.v[dx.index(n, c, 0, 0)];
                for (std::size_t i = 0; i < plane; ++i)
                    d[i] = static_cast<S>(scale * (static_cast<double>(g[i]) - sum_dy / m -
                                                   xh[i] * sum_dy_xhat / m));
            }
        }
        return dx;
    }

    void collect_params(const std::string& prefix, std::vector<ParamRef<S>>& out) override {
        out.push_back({prefix + ".gamma", type(), &gamma_, &dgamma_, true});
        out.push_back({prefix + ".beta", type(), &beta_, &dbeta_, true});
        out.push_back({prefix + ".running_mean", type(), &running_mean_, nullptr, false});
        out.push_back({prefix + ".running_var", type(), &running_var_, nullptr, false});
    }

    void zero_grad() override {
        std::fill(dgamma_.begin(), dgamma_.end(), S(0));
        std::fill(dbeta_.begin(), dbeta_.end(), S(0));
    }

private:
    double eps_, momentum_;
    Shape in_;
    std::vector<S> gamma_, beta_, running_mean_, running_var_, dgamma_, dbeta_;
    std::vector<double> batch_mean_, batch_var_, inv_std_;
    std::vector<double> xhat_;
};

template <typename S>
class DropoutLayer final : public Layer<S> {
public:
    explicit DropoutLayer(double rate) : rate_(rate) {
        if (!(rate >= 0.0 && rate < 1.0)) throw ValidationError("dropout: rate must be in [0, 1)");
    }

    std::string type() const override { return "dropout"; }
    Shape build(Shape in, Rng&) override { return in; }

    Tensor4<S> forward(const Tensor4<S>& x, bool train, Rng* rng) override {
        if (!train) return x; // exact identity in infer mode
        if (!rng) throw Error("dropout: train-mode forward needs an rng");
        Tensor4<S> y = x;
        mask_.resize(x.size());
        const S scale = static_cast<S>(1.0 / (1.0 - rate_));
        for (std::size_t i = 0; i < x.size(); ++i) {
            mask_[i] = rng->uniform() >= rate_;
            y.v[i] = mask_[i] ? x.v[i] * scale : S(0);
        }
        return y;
    }

    Tensor4<S> backward(const Tensor4<S>& dy) override {
        if (mask_.size() != dy.size()) throw Error("dropout: backward without cached forward");
        Tensor4<S> dx = dy;
        const S scale = static_cast<S>(1.0 / (1.0 - rate_));
        for (std::size_t i = 0; i < dx.size(); ++i) dx.v[i] = mask_[i] ? dx.v[i] * scale : S(0);
        return dx;
    }

private:
    double rate_;
    std::vector<char> mask_;
};

template <typename S>
class FlattenLayer final : public Layer<S> {
public:
    std::string type() const override { return "flatten"; }

    Shape build(Shape in, Rng&) override {
        in_ = in;
        return {static_cast<int>(in.count()), 1, 1};
    }

    Tensor4<S> forward(const Tensor4<S>& x, bool, Rng*) override {
        Tensor4<S> y = x;
        y.c = static_cast<int>(in_.count());
        y.h = y.w = 1;
        return y;
    }

    Tensor4<S> backward(const Tensor4<S>& dy) override {
        Tensor4<S> dx = dy;
        dx.c = in_.c;
        dx.h = in_.h;
        dx.w = in_.w;
        return dx;
    }

private:
    Shape in_;
};

template <typename S>
class GlobalAvgPoolLayer final : public Layer<S> {
public:
    std::string type() const override { return "gap"; }

    Shape build(Shape in, Rng&) override {
        in_ = in;
        return {in.c, 1, 1};
    }

    Tensor4<S> forward(const Tensor4<S>& x, bool, Rng*) override {
        Tensor4<S> y(x.n, x.c, 1, 1);
        const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
        for (int n = 0; n < x.n; ++n)
            for (int c = 0; c < x.c; ++c) {
                const S* src = &x.v[x.index(n, c, 0, 0)];
                double acc = 0.0;
                for (std::size_t i = 0; i < plane; ++i) acc += static_cast<double>(src[i]);
                y.at(n, c, 0, 0) = static_cast<S>(acc / static_cast<double>(plane));
            }
        return y;
    }

    Tensor4<S> backward(const Tensor4<S>& dy) override {
        Tensor4<S> dx(dy.n, in_.c, in_.h, in_.w);
        const std::size_t plane = static_cast<std::size_t>(in_.h) * in_.w;
        const S inv = static_cast<S>(1.0 / static_cast<double>(plane));
        for (int n = 0; n < dy.n; ++n)
            for (int c = 0; c < in_.c; ++c) {
                const S g = dy.at(n, c, 0, 0) * inv;
                S* d = &dx.v[dx.index(n, c, 0, 0)];
                for (std::size_t i = 0; i < plane; ++i) d[i] = g;
            }
        return dx;
    }

private:
    Shape in_;
};

template <typename S>
class FullyConnectedLayer final : public Layer<S> {
public:
    explicit FullyConnectedLayer(int out_features) : out_(out_features) {
        if (out_features < 1) throw ValidationError("fc: out must be >= 1");
    }

    std::string type() const override { return "fc"; }

    Shape build(Shape in, Rng& init_rng) override {
        in_ = in;
        in_features_ = static_cast<int>(in.count());
        weight_.resize(static_cast<std::size_t>(out_) * in_features_);
        bias_.assign(out_, S(0));
        const double he = std::sqrt(2.0 / static_cast<double>(in_features_));
        for (auto& w : weight_) w = static_cast<S>(init_rng.normal() * he);
        dweight_.assign(weight_.size(), S(0));
        dbias_.assign(bias_.size(), S(0));
        return {out_, 1, 1};
    }

    Tensor4<S> forward(const Tensor4<S>& x, bool train, Rng*) override {
        if (train) x_ = x;
        Tensor4<S> y(x.n, out_, 1, 1);
        for (int n = 0; n < x.n; ++n) {
            const S* src = &x.v[static_cast<std::size_t>(n) * in_features_];
            for (int o = 0; o < out_; ++o) {
                const S* wrow = &weight_[static_cast<std::size_t>(o) * in_features_];
                S acc = bias_[o];
                for (int i = 0; i < in_features_; ++i) acc += wrow[i] * src[i];
                y.at(n, o, 0, 0) = acc;
            }
        }
        return y;
    }

    Tensor4<S> backward(const Tensor4<S>& dy) override {
        if (x_.size() == 0) throw Error("fc: backward without cached forward");
        Tensor4<S> dx(dy.n, in_.c, in_.h, in_.w);
        for (int n = 0; n < dy.n; ++n) {
            const S* src = &x_.v[static_cast<std::size_t>(n) * in_features_];
            S* dsrc = &dx.v[static_cast<std::size_t>(n) * in_features_];
            for (int o = 0; o < out_; ++o) {
                const S g = dy.at(n, o, 0, 0);
                dbias_[o] += g;
                S* dwrow = &dweight_[static_cast<std::size_t>(o) * in_features_];
                const S* wrow = &weight_[static_cast<std::size_t>(o) * in_features_];
                for (int i = 0; i < in_features_; ++i) {
                    dwrow[i] += g * src[i];
                    dsrc[i] += g * wrow[i];
                }
            }
        }
        return dx;
    }

    void collect_params(const std::string& prefix, std::vector<ParamRef<S>>& out) override {
        out.push_back({prefix + ".weight", type(), &weight_, &dweight_, true});
        out.push_back({prefix + ".bias", type(), &bias_, &dbias_, true});
    }

    void zero_grad() override {
        std::fill(dweight_.begin(), dweight_.end(), S(0));
        std::fill(dbias_.begin(), dbias_.end(), S(0));
    }

private:
    int out_;
    Shape in_;
    int in_features_ = 0;
    std::vector<S> weight_, bias_, dweight_, dbias_;
    Tensor4<S> x_;
};

// inner(x) + x, or inner(x) + proj(x) when the projection flag enables a
// 1x1 convolution to reconcile shapes.
template <typename S>
class ResidualBlock final : public Layer<S> {
public:
    ResidualBlock(std::vector<std::unique_ptr<Layer<S>>> inner, bool projection)
        : inner_(std::move(inner)), use_proj_(projection) {
        if (inner_.empty()) throw ValidationError("residual: inner layer list is empty");
    }

    std::string type() const override { return "residual"; }

    Shape build(Shape in, Rng& init_rng) override {
        Shape s = in;
        for (auto& l : inner_) s = l->build(s, init_rng);
        if (use_proj_) {
            if (in.h % s.h != 0 || in.w % s.w != 0 || in.h / s.h != in.w / s.w)
                throw ValidationError("residual: projection cannot match " + in.str() + " to " + s.str());
            const int stride = in.h / s.h;
            proj_ = std::make_unique<ConvLayer<S>>(s.c, 1, stride, 0);
            const Shape ps = proj_->build(in, init_rng);
            if (!(ps == s))
                throw ValidationError("residual: projection yields " + ps.str() + ", inner yields " +
                                      s.str());
        } else if (!(s == in)) {
            throw ValidationError("residual: inner output " + s.str() + " differs from input " +
                                  in.str() + " and projection is off");
        }
        return s;
    }

    Tensor4<S> forward(const Tensor4<S>& x, bool train, Rng* rng) override {
        Tensor4<S> y = x;
        for (auto& l : inner_) y = l->forward(y, train, rng);
        const Tensor4<S> skip = proj_ ? proj_->forward(x, train, rng) : x;
        for (std::size_t i = 0; i < y.size(); ++i) y.v[i] += skip.v[i];
        return y;
    }

    Tensor4<S> backward(const Tensor4<S>& dy) override {
        Tensor4<S> dx = dy;
        for (auto it = inner_.rbegin(); it != inner_.rend(); ++it) dx = (*it)->backward(dx);
        const Tensor4<S> dskip = proj_ ? proj_->backward(dy) : dy;
        for (std::size_t i = 0; i < dx.size(); ++i) dx.v[i] += dskip.v[i];
        return dx;
    }

    void collect_params(const std::string& prefix, std::vector<ParamRef<S>>& out) override {
        for (std::size_t i = 0; i < inner_.size(); ++i)
            inner_[i]->collect_params(prefix + ".inner" + std::to_string(i), out);
        if (proj_) proj_->collect_params(prefix + ".proj", out);
    }

    void zero_grad() override {
        for (auto& l : inner_) l->zero_grad();
        if (proj_) proj_->zero_grad();
    }

private:
    std::vector<std::unique_ptr<Layer<S>>> inner_;
    bool use_proj_;
    std::unique_ptr<ConvLayer<S>> proj_;
};

} // namespace wsipipe::nn
