#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "wsipipe/common.hpp"

namespace wsipipe::nn {

// Channel-major (C, H, W) shape of one sample; the batch dimension lives on
// the tensor itself so arch validation can run batch-free.
struct Shape {
    int c = 0;
    int h = 0;
    int w = 0;

    std::size_t count() const {
        return static_cast<std::size_t>(c) * static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    }
    bool operator==(const Shape&) const = default;
    std::string str() const {
        return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
    }
};

template <typename S>
struct Tensor4 {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<S> v;

    Tensor4() = default;
    Tensor4(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_),
          v(static_cast<std::size_t>(n_) * c_ * h_ * w_, S(0)) {}
    Tensor4(int n_, Shape s) : Tensor4(n_, s.c, s.h, s.w) {}

    std::size_t size() const { return v.size(); }
    Shape shape() const { return {c, h, w}; }

    std::size_t index(int in, int ic, int iy, int ix) const {
        return ((static_cast<std::size_t>(in) * c + ic) * h + iy) * w + ix;
    }
    S& at(int in, int ic, int iy, int ix) { return v[index(in, ic, iy, ix)]; }
    S at(int in, int ic, int iy, int ix) const { return v[index(in, ic, iy, ix)]; }

    bool all_finite() const {
        for (S x : v)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }
};

} // namespace wsipipe::nn
