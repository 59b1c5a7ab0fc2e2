#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "deltaseg/ops.hpp"

namespace deltaseg {

void ConvSpec::validate() const {
    if (in_channels <= 0 || out_channels <= 0) throw std::invalid_argument("conv: channel counts must be positive");
    if (kernel <= 0 || stride <= 0 || dilation <= 0 || padding < 0)
        throw std::invalid_argument("conv: kernel/stride/dilation must be positive, padding non-negative");
    if (groups <= 0 || in_channels % groups != 0 || out_channels % groups != 0)
        throw std::invalid_argument("conv: groups " + std::to_string(groups) + " must divide in_channels " +
                                    std::to_string(in_channels) + " and out_channels " + std::to_string(out_channels));
}

int ConvSpec::out_size(int in) const {
    if (transposed) return (in - 1) * stride - 2 * padding + dilation * (kernel - 1) + 1;
    return (in + 2 * padding - dilation * (kernel - 1) - 1) / stride + 1;
}

namespace {

int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }
int ceil_div(int a, int b) { return a >= 0 ? (a + b - 1) / b : -((-a) / b); }

// valid output range [lo, hi) on the B side for one kernel tap, such that the
// matching A-side index a = o*s - p + k*d lands in [0, extent_a)
void tap_range(int extent_a, int extent_b, int s, int p, int kd, int& lo, int& hi) {
    lo = std::max(0, ceil_div(p - kd, s));
    hi = std::min(extent_b - 1, floor_div(extent_a - 1 + p - kd, s)) + 1;
    if (hi < lo) hi = lo;
}

// fixed-order 8-lane dot product; deterministic and vectorizable
template <typename T>
T dot_lanes(const T* __restrict a, const T* __restrict b, std::int64_t n) {
    T s[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        for (int l = 0; l < 8; ++l) s[l] += a[i + l] * b[i + l];
    for (; i < n; ++i) s[0] += a[i] * b[i];
    return ((s[0] + s[1]) + (s[2] + s[3])) + ((s[4] + s[5]) + (s[6] + s[7]));
}

// Geometry of the underlying standard convolution: A side (spatial Ha x Wa,
// channels A) maps to B side (Hb x Wb, channels B) through w[B, A/g, K, K].
struct Geom {
    int N, A, Ha, Wa, B, Hb, Wb, K, s, p, d, g;
    int apg() const { return A / g; }
    int bpg() const { return B / g; }
};

// pointwise 1x1 stride-1 convolutions reduce to whole-plane operations
inline bool is_pointwise(const Geom& q) { return q.K == 1 && q.s == 1 && q.p == 0 && q.d == 1; }

// column geometry shared by the stride-1 fused kernels
struct ColSpans {
    int lo[8], hi[8], off[8];
    int core_lo, core_hi;
};

ColSpans col_spans(const Geom& q) {
    ColSpans c{};
    c.core_lo = 0;
    c.core_hi = q.Wb;
    for (int kw = 0; kw < q.K; ++kw) {
        tap_range(q.Wa, q.Wb, 1, q.p, kw * q.d, c.lo[kw], c.hi[kw]);
        c.off[kw] = kw * q.d - q.p;
        c.core_lo = std::max(c.core_lo, c.lo[kw]);
        c.core_hi = std::min(c.core_hi, c.hi[kw]);
    }
    if (c.core_hi < c.core_lo) c.core_hi = c.core_lo;
    return c;
}

// one tap applied over a row range; the generic building block
template <typename T>
void gather_tap(const Geom& q, const T* __restrict xbase, T wv, T* __restrict ybase, int kh, int kw, int oh_from,
                int oh_to) {
    int oh_lo, oh_hi, ow_lo, ow_hi;
    tap_range(q.Ha, q.Hb, q.s, q.p, kh * q.d, oh_lo, oh_hi);
    tap_range(q.Wa, q.Wb, q.s, q.p, kw * q.d, ow_lo, ow_hi);
    oh_lo = std::max(oh_lo, oh_from);
    oh_hi = std::min(oh_hi, oh_to);
    for (int oh = oh_lo; oh < oh_hi; ++oh) {
        const int ih = oh * q.s - q.p + kh * q.d;
        const T* __restrict xr = xbase + static_cast<std::int64_t>(ih) * q.Wa;
        T* __restrict yr = ybase + static_cast<std::int64_t>(oh) * q.Wb;
        if (q.s == 1) {
            const T* __restrict xs = xr + kw * q.d - q.p;
            for (int ow = ow_lo; ow < ow_hi; ++ow) yr[ow] += wv * xs[ow];
        } else {
            for (int ow = ow_lo; ow < ow_hi; ++ow) yr[ow] += wv * xr[ow * q.s - q.p + kw * q.d];
        }
    }
}

// y[b-side] += sum w * x[a-side]
template <typename T>
void conv_gather(const Geom& q, const T* __restrict x, const T* __restrict w, T* __restrict y) {
    const int apg = q.apg(), bpg = q.bpg();
    if (is_pointwise(q)) {
        const std::int64_t hw = static_cast<std::int64_t>(q.Ha) * q.Wa;
        for (int n = 0; n < q.N; ++n)
            for (int gi = 0; gi < q.g; ++gi)
                for (int ob = 0; ob < bpg; ++ob) {
                    const int b = gi * bpg + ob;
                    T* __restrict yp = y + (static_cast<std::int64_t>(n) * q.B + b) * hw;
                    for (int a = 0; a < apg; ++a) {
                        const T wv = w[static_cast<std::int64_t>(b) * apg + a];
                        const T* __restrict xp = x + (static_cast<std::int64_t>(n) * q.A + gi * apg + a) * hw;
                        for (std::int64_t i = 0; i < hw; ++i) yp[i] += wv * xp[i];
                    }
                }
        return;
    }

    const bool fused3 = q.K == 3 && q.s == 1;
    ColSpans cs{};
    int mid_lo = 0, mid_hi = 0;
    if (fused3) {
        cs = col_spans(q);
        mid_lo = std::max(0, q.p);                      // rows where every kh tap is valid
        mid_hi = std::min(q.Hb, q.Ha + q.p - 2 * q.d);
        if (mid_hi < mid_lo) mid_hi = mid_lo;
    }

    for (int n = 0; n < q.N; ++n)
        for (int gi = 0; gi < q.g; ++gi)
            for (int ob = 0; ob < bpg; ++ob) {
                const int b = gi * bpg + ob;
                T* __restrict ybase = y + ((static_cast<std::int64_t>(n) * q.B + b) * q.Hb) * q.Wb;
                for (int a = 0; a < apg; ++a) {
                    const int ac = gi * apg + a;
                    const T* __restrict xbase = x + ((static_cast<std::int64_t>(n) * q.A + ac) * q.Ha) * q.Wa;
                    const T* __restrict wbase = w + ((static_cast<std::int64_t>(b) * apg + a) * q.K) * q.K;
                    if (!fused3) {
                        for (int kh = 0; kh < q.K; ++kh)
                            for (int kw = 0; kw < q.K; ++kw)
                                gather_tap(q, xbase, wbase[kh * q.K + kw], ybase, kh, kw, 0, q.Hb);
                        continue;
                    }
                    // boundary rows tap-by-tap, middle rows with all nine taps fused
                    for (int kh = 0; kh < 3; ++kh)
                        for (int kw = 0; kw < 3; ++kw) {
                            gather_tap(q, xbase, wbase[kh * 3 + kw], ybase, kh, kw, 0, mid_lo);
                            gather_tap(q, xbase, wbase[kh * 3 + kw], ybase, kh, kw, mid_hi, q.Hb);
                        }
                    const T w00 = wbase[0], w01 = wbase[1], w02 = wbase[2];
                    const T w10 = wbase[3], w11 = wbase[4], w12 = wbase[5];
                    const T w20 = wbase[6], w21 = wbase[7], w22 = wbase[8];
                    for (int oh = mid_lo; oh < mid_hi; ++oh) {
                        const T* __restrict x0 = xbase + static_cast<std::int64_t>(oh - q.p) * q.Wa;
                        const T* __restrict x1 = x0 + static_cast<std::int64_t>(q.d) * q.Wa;
                        const T* __restrict x2 = x1 + static_cast<std::int64_t>(q.d) * q.Wa;
                        T* __restrict yr = ybase + static_cast<std::int64_t>(oh) * q.Wb;
                        for (int kw = 0; kw < 3; ++kw) {  // left and right fringes
                            const int o = cs.off[kw];
                            const T a0 = wbase[kw], a1 = wbase[3 + kw], a2 = wbase[6 + kw];
                            for (int ow = cs.lo[kw]; ow < std::min(cs.hi[kw], cs.core_lo); ++ow)
                                yr[ow] += a0 * x0[ow + o] + a1 * x1[ow + o] + a2 * x2[ow + o];
                            for (int ow = std::max(cs.lo[kw], cs.core_hi); ow < cs.hi[kw]; ++ow)
                                yr[ow] += a0 * x0[ow + o] + a1 * x1[ow + o] + a2 * x2[ow + o];
                        }
                        const T* __restrict p0 = x0 + cs.off[0];
                        const T* __restrict p1 = x0 + cs.off[1];
                        const T* __restrict p2 = x0 + cs.off[2];
                        const T* __restrict q0 = x1 + cs.off[0];
                        const T* __restrict q1 = x1 + cs.off[1];
                        const T* __restrict q2 = x1 + cs.off[2];
                        const T* __restrict r0 = x2 + cs.off[0];
                        const T* __restrict r1 = x2 + cs.off[1];
                        const T* __restrict r2 = x2 + cs.off[2];
                        for (int ow = cs.core_lo; ow < cs.core_hi; ++ow)
                            yr[ow] += w00 * p0[ow] + w01 * p1[ow] + w02 * p2[ow] + w10 * q0[ow] + w11 * q1[ow] +
                                      w12 * q2[ow] + w20 * r0[ow] + w21 * r1[ow] + w22 * r2[ow];
                    }
                }
            }
}

// one tap of the adjoint, over an output-row range
template <typename T>
void scatter_tap(const Geom& q, const T* __restrict ybase, T wv, T* __restrict xbase, int kh, int kw, int oh_from,
                 int oh_to) {
    int oh_lo, oh_hi, ow_lo, ow_hi;
    tap_range(q.Ha, q.Hb, q.s, q.p, kh * q.d, oh_lo, oh_hi);
    tap_range(q.Wa, q.Wb, q.s, q.p, kw * q.d, ow_lo, ow_hi);
    oh_lo = std::max(oh_lo, oh_from);
    oh_hi = std::min(oh_hi, oh_to);
    for (int oh = oh_lo; oh < oh_hi; ++oh) {
        const int ih = oh * q.s - q.p + kh * q.d;
        T* __restrict xr = xbase + static_cast<std::int64_t>(ih) * q.Wa;
        const T* __restrict yr = ybase + static_cast<std::int64_t>(oh) * q.Wb;
        if (q.s == 1) {
            T* __restrict xs = xr + kw * q.d - q.p;
            for (int ow = ow_lo; ow < ow_hi; ++ow) xs[ow] += wv * yr[ow];
        } else {
            for (int ow = ow_lo; ow < ow_hi; ++ow) xr[ow * q.s - q.p + kw * q.d] += wv * yr[ow];
        }
    }
}

// x[a-side] += sum w * y[b-side]  (adjoint of conv_gather)
template <typename T>
void conv_scatter(const Geom& q, const T* __restrict y, const T* __restrict w, T* __restrict x) {
    const int apg = q.apg(), bpg = q.bpg();
    if (is_pointwise(q)) {
        const std::int64_t hw = static_cast<std::int64_t>(q.Ha) * q.Wa;
        for (int n = 0; n < q.N; ++n)
            for (int gi = 0; gi < q.g; ++gi)
                for (int a = 0; a < apg; ++a) {
                    T* __restrict xp = x + (static_cast<std::int64_t>(n) * q.A + gi * apg + a) * hw;
                    for (int ob = 0; ob < bpg; ++ob) {
                        const int b = gi * bpg + ob;
                        const T wv = w[static_cast<std::int64_t>(b) * apg + a];
                        const T* __restrict yp = y + (static_cast<std::int64_t>(n) * q.B + b) * hw;
                        for (std::int64_t i = 0; i < hw; ++i) xp[i] += wv * yp[i];
                    }
                }
        return;
    }

    const bool fused3 = q.K == 3 && q.s == 1;
    ColSpans cs{};
    int xmid_lo = 0, xmid_hi = 0;
    if (fused3) {
        cs = col_spans(q);
        // x rows reached by every kh tap: oh = ih + p - kh*d must lie in [0, Hb)
        xmid_lo = std::max(0, 2 * q.d - q.p);
        xmid_hi = std::min(q.Ha, q.Hb - q.p);
        if (xmid_hi < xmid_lo) xmid_hi = xmid_lo;
    }

    for (int n = 0; n < q.N; ++n)
        for (int gi = 0; gi < q.g; ++gi)
            for (int a = 0; a < apg; ++a) {
                const int ac = gi * apg + a;
                T* __restrict xbase = x + ((static_cast<std::int64_t>(n) * q.A + ac) * q.Ha) * q.Wa;
                for (int ob = 0; ob < bpg; ++ob) {
                    const int b = gi * bpg + ob;
                    const T* __restrict ybase = y + ((static_cast<std::int64_t>(n) * q.B + b) * q.Hb) * q.Wb;
                    const T* __restrict wbase = w + ((static_cast<std::int64_t>(b) * apg + a) * q.K) * q.K;
                    if (!fused3) {
                        for (int kh = 0; kh < q.K; ++kh)
                            for (int kw = 0; kw < q.K; ++kw)
                                scatter_tap(q, ybase, wbase[kh * q.K + kw], xbase, kh, kw, 0, q.Hb);
                        continue;
                    }
                    // boundary x rows tap-by-tap: those are written by output rows
                    // [0, xmid_lo + p - kh*d) and [xmid_hi + p - kh*d, Hb) per tap
                    for (int kh = 0; kh < 3; ++kh)
                        for (int kw = 0; kw < 3; ++kw) {
                            const int split_lo = xmid_lo + q.p - kh * q.d;   // oh writing x row xmid_lo
                            const int split_hi = xmid_hi + q.p - kh * q.d;
                            scatter_tap(q, ybase, wbase[kh * 3 + kw], xbase, kh, kw, 0, std::max(0, split_lo));
                            scatter_tap(q, ybase, wbase[kh * 3 + kw], xbase, kh, kw, std::max(0, split_hi), q.Hb);
                        }
                    const T w00 = wbase[0], w01 = wbase[1], w02 = wbase[2];
                    const T w10 = wbase[3], w11 = wbase[4], w12 = wbase[5];
                    const T w20 = wbase[6], w21 = wbase[7], w22 = wbase[8];
                    for (int ih = xmid_lo; ih < xmid_hi; ++ih) {
                        // y rows for kh = 0,1,2
                        const T* __restrict y0 = ybase + static_cast<std::int64_t>(ih + q.p) * q.Wb;
                        const T* __restrict y1 = y0 - static_cast<std::int64_t>(q.d) * q.Wb;
                        const T* __restrict y2 = y1 - static_cast<std::int64_t>(q.d) * q.Wb;
                        T* __restrict xr = xbase + static_cast<std::int64_t>(ih) * q.Wa;
                        // x-column interval for tap kw is [lo+off, hi+off)
                        int xcore_lo = 0, xcore_hi = q.Wa;
                        for (int kw = 0; kw < 3; ++kw) {
                            xcore_lo = std::max(xcore_lo, cs.lo[kw] + cs.off[kw]);
                            xcore_hi = std::min(xcore_hi, cs.hi[kw] + cs.off[kw]);
                        }
                        if (xcore_hi < xcore_lo) xcore_hi = xcore_lo;
                        for (int kw = 0; kw < 3; ++kw) {  // fringes
                            const int o = cs.off[kw];
                            const T a0 = wbase[kw], a1 = wbase[3 + kw], a2 = wbase[6 + kw];
                            for (int iw = cs.lo[kw] + o; iw < std::min(cs.hi[kw] + o, xcore_lo); ++iw)
                                xr[iw] += a0 * y0[iw - o] + a1 * y1[iw - o] + a2 * y2[iw - o];
                            for (int iw = std::max(cs.lo[kw] + o, xcore_hi); iw < cs.hi[kw] + o; ++iw)
                                xr[iw] += a0 * y0[iw - o] + a1 * y1[iw - o] + a2 * y2[iw - o];
                        }
                        const T* __restrict p0 = y0 - cs.off[0];
                        const T* __restrict p1 = y0 - cs.off[1];
                        const T* __restrict p2 = y0 - cs.off[2];
                        const T* __restrict s0 = y1 - cs.off[0];
                        const T* __restrict s1 = y1 - cs.off[1];
                        const T* __restrict s2 = y1 - cs.off[2];
                        const T* __restrict r0 = y2 - cs.off[0];
                        const T* __restrict r1 = y2 - cs.off[1];
                        const T* __restrict r2 = y2 - cs.off[2];
                        for (int iw = xcore_lo; iw < xcore_hi; ++iw)
                            xr[iw] += w00 * p0[iw] + w01 * p1[iw] + w02 * p2[iw] + w10 * s0[iw] + w11 * s1[iw] +
                                      w12 * s2[iw] + w20 * r0[iw] + w21 * r1[iw] + w22 * r2[iw];
                    }
                }
            }
}

// gw[b, a, kh, kw] += sum_n,oh,ow xa * yb  (correlation of A-side values with B-side values)
template <typename T>
void conv_weight_grad(const Geom& q, const T* __restrict xa, const T* __restrict yb, T* __restrict gw) {
    const int apg = q.apg(), bpg = q.bpg();
    if (is_pointwise(q)) {
        const std::int64_t hw = static_cast<std::int64_t>(q.Ha) * q.Wa;
        for (int gi = 0; gi < q.g; ++gi)
            for (int ob = 0; ob < bpg; ++ob) {
                const int b = gi * bpg + ob;
                for (int a = 0; a < apg; ++a) {
                    T acc = T(0);
                    for (int n = 0; n < q.N; ++n)
                        acc += dot_lanes(xa + (static_cast<std::int64_t>(n) * q.A + gi * apg + a) * hw,
                                         yb + (static_cast<std::int64_t>(n) * q.B + b) * hw, hw);
                    gw[static_cast<std::int64_t>(b) * apg + a] += acc;
                }
            }
        return;
    }
    for (int gi = 0; gi < q.g; ++gi)
        for (int ob = 0; ob < bpg; ++ob) {
            const int b = gi * bpg + ob;
            for (int a = 0; a < apg; ++a) {
                const int ac = gi * apg + a;
                T* __restrict wbase = gw + ((static_cast<std::int64_t>(b) * apg + a) * q.K) * q.K;
                for (int kh = 0; kh < q.K; ++kh)
                    for (int kw = 0; kw < q.K; ++kw) {
                        int oh_lo, oh_hi, ow_lo, ow_hi;
                        tap_range(q.Ha, q.Hb, q.s, q.p, kh * q.d, oh_lo, oh_hi);
                        tap_range(q.Wa, q.Wb, q.s, q.p, kw * q.d, ow_lo, ow_hi);
                        T acc = T(0);
                        for (int n = 0; n < q.N; ++n) {
                            const T* __restrict xbase = xa + ((static_cast<std::int64_t>(n) * q.A + ac) * q.Ha) * q.Wa;
                            const T* __restrict ybase = yb + ((static_cast<std::int64_t>(n) * q.B + b) * q.Hb) * q.Wb;
                            for (int oh = oh_lo; oh < oh_hi; ++oh) {
                                const int ih = oh * q.s - q.p + kh * q.d;
                                const T* __restrict xr = xbase + static_cast<std::int64_t>(ih) * q.Wa;
                                const T* __restrict yr = ybase + static_cast<std::int64_t>(oh) * q.Wb;
                                if (q.s == 1) {
                                    acc += dot_lanes(xr + ow_lo + kw * q.d - q.p, yr + ow_lo, ow_hi - ow_lo);
                                } else {
                                    for (int ow = ow_lo; ow < ow_hi; ++ow)
                                        acc += xr[ow * q.s - q.p + kw * q.d] * yr[ow];
                                }
                            }
                        }
                        wbase[kh * q.K + kw] += acc;
                    }
            }
        }
}

}  // namespace

template <typename T>
TensorPtrT<T> conv2d(const TensorPtrT<T>& x, const TensorPtrT<T>& w, const TensorPtrT<T>& bias,
                     const ConvSpec& spec) {
    spec.validate();
    if (x->rank() != 4)
        throw std::invalid_argument("conv2d: input must be rank-4 [N,C,H,W], got " + shape_str(x->shape));
    if (x->dim(1) != spec.in_channels)
        throw std::invalid_argument("conv2d: input channel dim is " + std::to_string(x->dim(1)) +
                                    ", spec expects in_channels " + std::to_string(spec.in_channels));
    const std::vector<int> expect_w =
        spec.transposed
            ? std::vector<int>{spec.in_channels, spec.out_channels / spec.groups, spec.kernel, spec.kernel}
            : std::vector<int>{spec.out_channels, spec.in_channels / spec.groups, spec.kernel, spec.kernel};
    if (w->shape != expect_w)
        throw std::invalid_argument("conv2d: weight shape " + shape_str(w->shape) + " does not match expected " +
                                    shape_str(expect_w));
    if (bias && bias->shape != std::vector<int>{spec.out_channels})
        throw std::invalid_argument("conv2d: bias shape " + shape_str(bias->shape) + " must be [" +
                                    std::to_string(spec.out_channels) + "]");

    const int N = x->dim(0), H = x->dim(2), W = x->dim(3);
    if (!spec.transposed) {
        if (spec.effective_extent() > H + 2 * spec.padding || spec.effective_extent() > W + 2 * spec.padding)
            throw std::invalid_argument("conv2d: effective kernel extent " + std::to_string(spec.effective_extent()) +
                                        " exceeds padded input extent " +
                                        std::to_string(std::min(H, W) + 2 * spec.padding));
    }
    const int Ho = spec.out_size(H), Wo = spec.out_size(W);
    if (Ho <= 0 || Wo <= 0)
        throw std::invalid_argument("conv2d: zero-size output " + std::to_string(Ho) + "x" + std::to_string(Wo) +
                                    " from input " + std::to_string(H) + "x" + std::to_string(W));

    auto out = TensorT<T>::create({N, spec.out_channels, Ho, Wo});

    // map to the underlying standard-conv geometry (A side is the larger extent)
    Geom q;
    q.N = N;
    q.K = spec.kernel;
    q.s = spec.stride;
    q.p = spec.padding;
    q.d = spec.dilation;
    q.g = spec.groups;
    if (!spec.transposed) {
        q.A = spec.in_channels; q.Ha = H; q.Wa = W;
        q.B = spec.out_channels; q.Hb = Ho; q.Wb = Wo;
    } else {
        q.A = spec.out_channels; q.Ha = Ho; q.Wa = Wo;
        q.B = spec.in_channels; q.Hb = H; q.Wb = W;
    }

    if (bias) {
        const std::int64_t hw = static_cast<std::int64_t>(Ho) * Wo;
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < spec.out_channels; ++c) {
                T* p = out->data.data() + (static_cast<std::int64_t>(n) * spec.out_channels + c) * hw;
                const T bv = bias->data[static_cast<std::size_t>(c)];
                for (std::int64_t i = 0; i < hw; ++i) p[i] = bv;
            }
    }

    if (!spec.transposed)
        conv_gather(q, x->data.data(), w->data.data(), out->data.data());
    else
        conv_scatter(q, x->data.data(), w->data.data(), out->data.data());

    const bool rg = x->requires_grad || w->requires_grad || (bias && bias->requires_grad);
    if (rg) {
        out->requires_grad = true;
        out->parents = {x, w};
        if (bias) out->parents.push_back(bias);
        TensorT<T>* on = out.get();
        TensorT<T>* xn = x.get();
        TensorT<T>* wn = w.get();
        TensorT<T>* bn = bias ? bias.get() : nullptr;
        const bool transposed = spec.transposed;
        const int Cout = spec.out_channels;
        out->backward_fn = [on, xn, wn, bn, q, transposed, Cout, N, Ho, Wo]() {
            const T* g = on->grad.data();
            if (xn->requires_grad) {
                xn->ensure_grad();
                if (!transposed)
                    conv_scatter(q, g, wn->data.data(), xn->grad.data());
                else
                    conv_gather(q, g, wn->data.data(), xn->grad.data());
            }
            if (wn->requires_grad) {
                wn->ensure_grad();
                if (!transposed)
                    conv_weight_grad(q, xn->data.data(), g, wn->grad.data());
                else
                    conv_weight_grad(q, g, xn->data.data(), wn->grad.data());
            }
            if (bn && bn->requires_grad) {
                bn->ensure_grad();
                const std::int64_t hw = static_cast<std::int64_t>(Ho) * Wo;
                for (int n = 0; n < N; ++n)
                    for (int c = 0; c < Cout; ++c) {
                        const T* p = g + (static_cast<std::int64_t>(n) * Cout + c) * hw;
                        T acc = T(0);
                        for (std::int64_t i = 0; i < hw; ++i) acc += p[i];
                        bn->grad[static_cast<std::size_t>(c)] += acc;
                    }
            }
        };
    }
    return out;
}

template TensorPtrT<float> conv2d<float>(const TensorPtrT<float>&, const TensorPtrT<float>&,
                                         const TensorPtrT<float>&, const ConvSpec&);
template TensorPtrT<double> conv2d<double>(const TensorPtrT<double>&, const TensorPtrT<double>&,
                                           const TensorPtrT<double>&, const ConvSpec&);

}  // namespace deltaseg
