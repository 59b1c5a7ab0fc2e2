#pragma once

// Test-only reference implementations, kept independent of the library's
// compute paths: plain nested loops and straight-line formula evaluations.

#include <cmath>
#include <random>
#include <vector>

#include "deltaseg/ops.hpp"
#include "deltaseg/tensor.hpp"

namespace oracle {

using deltaseg::ConvSpec;

// Direct summation with explicit zero padding; standard (non-transposed) only.
template <typename T>
std::vector<T> conv2d_ref(const std::vector<T>& x, int N, int Cin, int H, int W, const std::vector<T>& w,
                          const std::vector<T>* bias, const ConvSpec& s, int& Ho, int& Wo) {
    Ho = (H + 2 * s.padding - s.dilation * (s.kernel - 1) - 1) / s.stride + 1;
    Wo = (W + 2 * s.padding - s.dilation * (s.kernel - 1) - 1) / s.stride + 1;
    const int icg = s.in_channels / s.groups;
    const int ocg = s.out_channels / s.groups;
    std::vector<T> y(static_cast<std::size_t>(N) * s.out_channels * Ho * Wo, T(0));
    for (int n = 0; n < N; ++n)
        for (int oc = 0; oc < s.out_channels; ++oc) {
            const int g = oc / ocg;
            for (int oh = 0; oh < Ho; ++oh)
                for (int ow = 0; ow < Wo; ++ow) {
                    T acc = bias ? (*bias)[static_cast<std::size_t>(oc)] : T(0);
                    for (int ic = 0; ic < icg; ++ic)
                        for (int kh = 0; kh < s.kernel; ++kh)
                            for (int kw = 0; kw < s.kernel; ++kw) {
                                const int ih = oh * s.stride - s.padding + kh * s.dilation;
                                const int iw = ow * s.stride - s.padding + kw * s.dilation;
                                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                                const T xv = x[((static_cast<std::size_t>(n) * Cin + g * icg + ic) * H + ih) * W + iw];
                                const T wv = w[((static_cast<std::size_t>(oc) * icg + ic) * s.kernel + kh) * s.kernel + kw];
                                acc += xv * wv;
                            }
                    y[((static_cast<std::size_t>(n) * s.out_channels + oc) * Ho + oh) * Wo + ow] = acc;
                }
        }
    return y;
}

// Half-pixel-center bilinear resize of one plane.
template <typename T>
std::vector<T> bilinear_ref(const std::vector<T>& x, int H, int W, int oh, int ow) {
    std::vector<T> y(static_cast<std::size_t>(oh) * ow);
    for (int r = 0; r < oh; ++r)
        for (int c = 0; c < ow; ++c) {
            double sy = (r + 0.5) * static_cast<double>(H) / oh - 0.5;
            double sx = (c + 0.5) * static_cast<double>(W) / ow - 0.5;
            if (sy < 0) sy = 0;
            if (sx < 0) sx = 0;
            const int y0 = std::min(static_cast<int>(sy), H - 1);
            const int x0 = std::min(static_cast<int>(sx), W - 1);
            const int y1 = std::min(y0 + 1, H - 1);
            const int x1 = std::min(x0 + 1, W - 1);
            const double fy = sy - y0, fx = sx - x0;
            const double v = (1 - fy) * ((1 - fx) * x[static_cast<std::size_t>(y0) * W + x0] +
                                         fx * x[static_cast<std::size_t>(y0) * W + x1]) +
                             fy * ((1 - fx) * x[static_cast<std::size_t>(y1) * W + x0] +
                                   fx * x[static_cast<std::size_t>(y1) * W + x1]);
            y[static_cast<std::size_t>(r) * ow + c] = static_cast<T>(v);
        }
    return y;
}

inline double sigmoid_ref(double v) { return 1.0 / (1.0 + std::exp(-v)); }

template <typename T>
deltaseg::TensorPtrT<T> randn(std::vector<int> shape, std::mt19937_64& rng, double scale = 1.0,
                              bool requires_grad = false) {
    auto t = deltaseg::TensorT<T>::create(std::move(shape), requires_grad);
    std::normal_distribution<double> n(0.0, scale);
    for (auto& v : t->data) v = static_cast<T>(n(rng));
    return t;
}

}  // namespace oracle
