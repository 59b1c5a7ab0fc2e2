#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "deltaseg/ops.hpp"

namespace deltaseg {

namespace {

void require_rank4(const std::vector<int>& s, const char* who) {
    if (s.size() != 4) throw std::invalid_argument(std::string(who) + ": expected rank-4 [N,C,H,W], got " + shape_str(s));
}

}  // namespace

template <typename T>
TensorPtrT<T> pool2d(const TensorPtrT<T>& x, PoolKind kind, int window, int stride) {
    require_rank4(x->shape, "pool2d");
    const int N = x->dim(0), C = x->dim(1), H = x->dim(2), W = x->dim(3);
    if (kind == PoolKind::GlobalAvg) return global_avg_pool(x);
    if (window <= 0 || stride <= 0) throw std::invalid_argument("pool2d: window and stride must be positive");
    if (window > H || window > W)
        throw std::invalid_argument("pool2d: window " + std::to_string(window) + " exceeds input extent " +
                                    std::to_string(H) + "x" + std::to_string(W));
    const int Ho = (H - window) / stride + 1;
    const int Wo = (W - window) / stride + 1;
    auto out = TensorT<T>::create({N, C, Ho, Wo});

    std::vector<std::int64_t> argmax;
    if (kind == PoolKind::Max) argmax.resize(out->data.size());
    const T inv = T(1) / static_cast<T>(window * window);

    std::int64_t oi = 0;
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const T* base = x->data.data() + (static_cast<std::int64_t>(n) * C + c) * H * W;
            for (int oh = 0; oh < Ho; ++oh)
                for (int ow = 0; ow < Wo; ++ow, ++oi) {
                    const int ih0 = oh * stride, iw0 = ow * stride;
                    if (kind == PoolKind::Max) {
                        // first maximal element in row-major window order wins ties
                        T best = base[static_cast<std::int64_t>(ih0) * W + iw0];
                        std::int64_t bestIdx = static_cast<std::int64_t>(ih0) * W + iw0;
                        for (int a = 0; a < window; ++a)
                            for (int b = 0; b < window; ++b) {
                                const std::int64_t idx = static_cast<std::int64_t>(ih0 + a) * W + (iw0 + b);
                                if (base[idx] > best) {
                                    best = base[idx];
                                    bestIdx = idx;
                                }
                            }
                        out->data[static_cast<std::size_t>(oi)] = best;
                        argmax[static_cast<std::size_t>(oi)] =
                            (static_cast<std::int64_t>(n) * C + c) * H * W + bestIdx;
                    } else {
                        T acc = T(0);
                        for (int a = 0; a < window; ++a)
                            for (int b = 0; b < window; ++b)
                                acc += base[static_cast<std::int64_t>(ih0 + a) * W + (iw0 + b)];
                        out->data[static_cast<std::size_t>(oi)] = acc * inv;
                    }
                }
        }

    if (x->requires_grad) {
        out->requires_grad = true;
        out->parents = {x};
        TensorT<T>* on = out.get();
        TensorT<T>* xn = x.get();
        if (kind == PoolKind::Max) {
            out->backward_fn = [on, xn, argmax]() {
                xn->ensure_grad();
                for (std::size_t i = 0; i < argmax.size(); ++i)
                    xn->grad[static_cast<std::size_t>(argmax[i])] += on->grad[i];
            };
        } else {
            out->backward_fn = [on, xn, N, C, H, W, Ho, Wo, window, stride, inv]() {
                xn->ensure_grad();
                std::int64_t oi = 0;
                for (int n = 0; n < N; ++n)
                    for (int c = 0; c < C; ++c) {
                        T* gx = xn->grad.data() + (static_cast<std::int64_t>(n) * C + c) * H * W;
                        for (int oh = 0; oh < Ho; ++oh)
                            for (int ow = 0; ow < Wo; ++ow, ++oi) {
                                const T gv = on->grad[static_cast<std::size_t>(oi)] * inv;
                                for (int a = 0; a < window; ++a)
                                    for (int b = 0; b < window; ++b)
                                        gx[static_cast<std::int64_t>(oh * stride + a) * W + (ow * stride + b)] += gv;
                            }
                    }
            };
        }
    }
    return out;
}

template <typename T>
TensorPtrT<T> global_avg_pool(const TensorPtrT<T>& x) {
    require_rank4(x->shape, "global_avg_pool");
    const int N = x->dim(0), C = x->dim(1), H = x->dim(2), W = x->dim(3);
    auto out = TensorT<T>::create({N, C, 1, 1});
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    const T inv = T(1) / static_cast<T>(hw);
    for (int nc = 0; nc < N * C; ++nc) {
        const T* p = x->data.data() + nc * hw;
        T acc = T(0);
        for (std::int64_t i = 0; i < hw; ++i) acc += p[i];
        out->data[static_cast<std::size_t>(nc)] = acc * inv;
    }
    if (x->requires_grad) {
        out->requires_grad = true;
        out->parents = {x};
        TensorT<T>* on = out.get();
        TensorT<T>* xn = x.get();
        out->backward_fn = [on, xn, N, C, hw, inv]() {
            xn->ensure_grad();
            for (int nc = 0; nc < N * C; ++nc) {
                const T gv = on->grad[static_cast<std::size_t>(nc)] * inv;
                T* gx = xn->grad.data() + nc * hw;
                for (std::int64_t i = 0; i < hw; ++i) gx[i] += gv;
            }
        };
    }
    return out;
}

template <typename T>
TensorPtrT<T> batch_norm2d(const TensorPtrT<T>& x, const TensorPtrT<T>& gamma, const TensorPtrT<T>& beta,
                           std::vector<T>& running_mean, std::vector<T>& running_var, bool training, T eps,
                           T momentum) {
    require_rank4(x->shape, "batch_norm2d");
    const int N = x->dim(0), C = x->dim(1), H = x->dim(2), W = x->dim(3);
    if (gamma->numel() != C || beta->numel() != C)
        throw std::invalid_argument("batch_norm2d: gamma/beta length must equal channel count " + std::to_string(C));
    if (static_cast<int>(running_mean.size()) != C || static_cast<int>(running_var.size()) != C)
        throw std::invalid_argument("batch_norm2d: running stats length must equal channel count");

    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    const std::int64_t m = static_cast<std::int64_t>(N) * hw;  // reduce count per channel
    if (training && m == 1)
        throw std::invalid_argument("batch_norm2d: batch of size 1 with 1x1 spatial extent has degenerate "
                                    "variance in training mode");

    std::vector<T> mean(static_cast<std::size_t>(C)), invstd(static_cast<std::size_t>(C));
    if (training) {
        for (int c = 0; c < C; ++c) {
            T s = T(0);
            for (int n = 0; n < N; ++n) {
                const T* p = x->data.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
                for (std::int64_t i = 0; i < hw; ++i) s += p[i];
            }
            const T mu = s / static_cast<T>(m);
            T v = T(0);
            for (int n = 0; n < N; ++n) {
                const T* p = x->data.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
                for (std::int64_t i = 0; i < hw; ++i) {
                    const T d = p[i] - mu;
                    v += d * d;
                }
            }
            v /= static_cast<T>(m);  // biased, matches the normalization
            mean[static_cast<std::size_t>(c)] = mu;
            invstd[static_cast<std::size_t>(c)] = T(1) / std::sqrt(v + eps);
            running_mean[static_cast<std::size_t>(c)] = (T(1) - momentum) * running_mean[static_cast<std::size_t>(c)] + momentum * mu;
            running_var[static_cast<std::size_t>(c)] = (T(1) - momentum) * running_var[static_cast<std::size_t>(c)] + momentum * v;
        }
    } else {
        for (int c = 0; c < C; ++c) {
            mean[static_cast<std::size_t>(c)] = running_mean[static_cast<std::size_t>(c)];
            invstd[static_cast<std::size_t>(c)] = T(1) / std::sqrt(running_var[static_cast<std::size_t>(c)] + eps);
        }
    }

    auto out = TensorT<T>::create(x->shape);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const T* p = x->data.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
            T* q = out->data.data() + (static_cast<std::int64_t>(n) * C + c) * hw;
            const T mu = mean[static_cast<std::size_t>(c)];
            const T is = invstd[static_cast<std::size_t>(c)];
            const T g = gamma->data[static_cast<std::size_t>(c)];
            const T b = beta->data[static_cast<std::size_t>(c)];
            for (std::int64_t i = 0; i < hw; ++i) q[i] = (p[i] - mu) * is * g + b;
        }

    if (x->requires_grad || gamma->requires_grad || beta->requires_grad) {
        out->requires_grad = true;
        out->parents = {x, gamma, beta};
        TensorT<T>* on = out.get();
        TensorT<T>* xn = x.get();
        TensorT<T>* gn = gamma.get();
        TensorT<T>* bn = beta.get();
        out->backward_fn = [on, xn, gn, bn, mean, invstd, training, N, C, hw, m]() {
            const T* go = on->grad.data();
            for (int c = 0; c < C; ++c) {
                const T mu = mean[static_cast<std::size_t>(c)];
                const T is = invstd[static_cast<std::size_t>(c)];
                const T gm = gn->data[static_cast<std::size_t>(c)];
                // per-channel reductions over the batch
                T gsum = T(0), gxhat = T(0);
                for (int n = 0; n < N; ++n) {
                    const std::int64_t base = (static_cast<std::int64_t>(n) * C + c) * hw;
                    const T* g = go + base;
                    const T* xv = xn->data.data() + base;
                    for (std::int64_t i = 0; i < hw; ++i) {
                        gsum += g[i];
                        gxhat += g[i] * (xv[i] - mu) * is;
                    }
                }
                if (gn->requires_grad) {
                    gn->ensure_grad();
                    gn->grad[static_cast<std::size_t>(c)] += gxhat;
                }
                if (bn->requires_grad) {
                    bn->ensure_grad();
                    bn->grad[static_cast<std::size_t>(c)] += gsum;
                }
                if (xn->requires_grad) {
                    xn->ensure_grad();
                    const T scale = gm * is;
                    if (training) {
                        const T invm = T(1) / static_cast<T>(m);
                        for (int n = 0; n < N; ++n) {
                            const std::int64_t base = (static_cast<std::int64_t>(n) * C + c) * hw;
                            const T* g = go + base;
                            const T* xv = xn->data.data() + base;
                            T* gx = xn->grad.data() + base;
                            for (std::int64_t i = 0; i < hw; ++i) {
                                const T xh = (xv[i] - mu) * is;
                                gx[i] += scale * (g[i] - gsum * invm - xh * gxhat * invm);
                            }
                        }
                    } else {
                        for (int n = 0; n < N; ++n) {
                            const std::int64_t base = (static_cast<std::int64_t>(n) * C + c) * hw;
                            const T* g = go + base;
                            T* gx = xn->grad.data() + base;
                            for (std::int64_t i = 0; i < hw; ++i) gx[i] += scale * g[i];
                        }
                    }
                }
            }
        };
    }
    return out;
}

template <typename T>
TensorPtrT<T> resize_bilinear(const TensorPtrT<T>& x, int out_h, int out_w) {
    require_rank4(x->shape, "resize_bilinear");
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize_bilinear: output extents must be >= 1");
    const int N = x->dim(0), C = x->dim(1), H = x->dim(2), W = x->dim(3);

    if (out_h == H && out_w == W) {  // bitwise identity
        auto out = TensorT<T>::from_data(x->shape, x->data);
        if (x->requires_grad) {
            out->requires_grad = true;
            out->parents = {x};
            TensorT<T>* on = out.get();
            TensorT<T>* xn = x.get();
            out->backward_fn = [on, xn]() {
                xn->ensure_grad();
                for (std::size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += on->grad[i];
            };
        }
        return out;
    }

    struct Tap {
        int i0, i1;
        T f;  // weight of i1; i0 gets 1-f
    };
    auto make_taps = [](int in, int out) {
        std::vector<Tap> taps(static_cast<std::size_t>(out));
        const double scale = static_cast<double>(in) / out;
        for (int o = 0; o < out; ++o) {
            double src = (o + 0.5) * scale - 0.5;
            if (src < 0) src = 0;
            int i0 = static_cast<int>(src);
            if (i0 > in - 1) i0 = in - 1;
            const int i1 = std::min(i0 + 1, in - 1);
            taps[static_cast<std::size_t>(o)] = {i0, i1, static_cast<T>(src - i0)};
        }
        return taps;
    };
    const auto ty = make_taps(H, out_h);
    const auto tx = make_taps(W, out_w);

    auto out = TensorT<T>::create({N, C, out_h, out_w});
    for (int nc = 0; nc < N * C; ++nc) {
        const T* p = x->data.data() + static_cast<std::int64_t>(nc) * H * W;
        T* q = out->data.data() + static_cast<std::int64_t>(nc) * out_h * out_w;
        for (int oy = 0; oy < out_h; ++oy) {
            const Tap& a = ty[static_cast<std::size_t>(oy)];
            const T* r0 = p + static_cast<std::int64_t>(a.i0) * W;
            const T* r1 = p + static_cast<std::int64_t>(a.i1) * W;
            for (int ox = 0; ox < out_w; ++ox) {
                const Tap& b = tx[static_cast<std::size_t>(ox)];
                const T top = r0[b.i0] * (T(1) - b.f) + r0[b.i1] * b.f;
                const T bot = r1[b.i0] * (T(1) - b.f) + r1[b.i1] * b.f;
                q[static_cast<std::int64_t>(oy) * out_w + ox] = top * (T(1) - a.f) + bot * a.f;
            }
        }
    }
    if (x->requires_grad) {
        out->requires_grad = true;
        out->parents = {x};
        TensorT<T>* on = out.get();
        TensorT<T>* xn = x.get();
        out->backward_fn = [on, xn, ty, tx, N, C, H, W, out_h, out_w]() {
            xn->ensure_grad();
            for (int nc = 0; nc < N * C; ++nc) {
                const T* g = on->grad.data() + static_cast<std::int64_t>(nc) * out_h * out_w;
                T* gx = xn->grad.data() + static_cast<std::int64_t>(nc) * H * W;
                for (int oy = 0; oy < out_h; ++oy) {
                    const Tap& a = ty[static_cast<std::size_t>(oy)];
                    for (int ox = 0; ox < out_w; ++ox) {
                        const Tap& b = tx[static_cast<std::size_t>(ox)];
                        const T gv = g[static_cast<std::int64_t>(oy) * out_w + ox];
                        gx[static_cast<std::int64_t>(a.i0) * W + b.i0] += gv * (T(1) - a.f) * (T(1) - b.f);
                        gx[static_cast<std::int64_t>(a.i0) * W + b.i1] += gv * (T(1) - a.f) * b.f;
                        gx[static_cast<std::int64_t>(a.i1) * W + b.i0] += gv * a.f * (T(1) - b.f);
                        gx[static_cast<std::int64_t>(a.i1) * W + b.i1] += gv * a.f * b.f;
                    }
                }
            }
        };
    }
    return out;
}

template <typename T>
TensorPtrT<T> dropout(const TensorPtrT<T>& x, double p, std::mt19937_64& rng) {
    if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0,1)");
    const std::int64_t n = x->numel();
    std::vector<T> mask(static_cast<std::size_t>(n));
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
    for (std::int64_t i = 0; i < n; ++i) mask[static_cast<std::size_t>(i)] = uni(rng) < p ? T(0) : keep_scale;

    auto out = TensorT<T>::create(x->shape);
    for (std::int64_t i = 0; i < n; ++i) out->data[static_cast<std::size_t>(i)] = x->data[static_cast<std::size_t>(i)] * mask[static_cast<std::size_t>(i)];
    if (x->requires_grad) {
        out->requires_grad = true;
        out->parents = {x};
        TensorT<T>* on = out.get();
        TensorT<T>* xn = x.get();
        out->backward_fn = [on, xn, mask, n]() {
            xn->ensure_grad();
            for (std::int64_t i = 0; i < n; ++i)
                xn->grad[static_cast<std::size_t>(i)] += on->grad[static_cast<std::size_t>(i)] * mask[static_cast<std::size_t>(i)];
        };
    }
    return out;
}

template <typename T>
TensorPtrT<T> gather_class(const TensorPtrT<T>& x, const LabelMap& labels) {
    require_rank4(x->shape, "gather_class");
    const int N = x->dim(0), C = x->dim(1), H = x->dim(2), W = x->dim(3);
    if (labels.n != N || labels.h != H || labels.w != W)
        throw std::invalid_argument("gather_class: label map " + std::to_string(labels.n) + "x" +
                                    std::to_string(labels.h) + "x" + std::to_string(labels.w) +
                                    " does not match logits " + shape_str(x->shape));
    auto out = TensorT<T>::create({N, 1, H, W});
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    for (int n = 0; n < N; ++n)
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j) {
                const std::int32_t y = labels.at(n, i, j);
                if (y < 0 || y >= C)
                    throw std::invalid_argument("label " + std::to_string(y) + " out of range [0," + std::to_string(C) +
                                                ") at (n=" + std::to_string(n) + ",i=" + std::to_string(i) +
                                                ",j=" + std::to_string(j) + ")");
                out->data[static_cast<std::size_t>(n * hw + i * W + j)] =
                    x->data[static_cast<std::size_t>(((static_cast<std::int64_t>(n) * C + y) * H + i) * W + j)];
            }
    if (x->requires_grad) {
        out->requires_grad = true;
        out->parents = {x};
        TensorT<T>* on = out.get();
        TensorT<T>* xn = x.get();
        LabelMap lab = labels;
        out->backward_fn = [on, xn, lab, N, C, H, W, hw]() {
            xn->ensure_grad();
            for (int n = 0; n < N; ++n)
                for (int i = 0; i < H; ++i)
                    for (int j = 0; j < W; ++j) {
                        const std::int32_t y = lab.at(n, i, j);
                        xn->grad[static_cast<std::size_t>(((static_cast<std::int64_t>(n) * C + y) * H + i) * W + j)] +=
                            on->grad[static_cast<std::size_t>(n * hw + i * W + j)];
                    }
        };
    }
    return out;
}

template <typename T>
TensorPtrT<T> one_hot(const LabelMap& labels, int num_classes) {
    if (num_classes <= 0) throw std::invalid_argument("one_hot: num_classes must be positive");
    auto out = TensorT<T>::create({labels.n, num_classes, labels.h, labels.w});
    for (int n = 0; n < labels.n; ++n)
        for (int i = 0; i < labels.h; ++i)
            for (int j = 0; j < labels.w; ++j) {
                const std::int32_t y = labels.at(n, i, j);
                if (y < 0 || y >= num_classes)
                    throw std::invalid_argument("label " + std::to_string(y) + " out of range [0," +
                                                std::to_string(num_classes) + ") at (n=" + std::to_string(n) +
                                                ",i=" + std::to_string(i) + ",j=" + std::to_string(j) + ")");
                out->data[static_cast<std::size_t>(((static_cast<std::int64_t>(n) * num_classes + y) * labels.h + i) *
                                                   labels.w + j)] = T(1);
            }
    return out;
}

template <typename T>
TensorPtrT<T> normalize_channels(const TensorPtrT<T>& x, T eps) {
    require_rank4(x->shape, "normalize_channels");
    if (x->dim(2) != 1 || x->dim(3) != 1)
        throw std::invalid_argument("normalize_channels: expected [N,C,1,1], got " + shape_str(x->shape));
    const int N = x->dim(0), C = x->dim(1);
    auto out = TensorT<T>::create(x->shape);
    std::vector<T> norms(static_cast<std::size_t>(N));
    for (int n = 0; n < N; ++n) {
        const T* v = x->data.data() + static_cast<std::int64_t>(n) * C;
        T s = T(0);
        for (int c = 0; c < C; ++c) s += v[c] * v[c];
        const T nrm = std::sqrt(s);
        norms[static_cast<std::size_t>(n)] = nrm;
        T* k = out->data.data() + static_cast<std::int64_t>(n) * C;
        if (nrm == T(0)) {
            k[0] = T(1);  // fall back to the first unit basis vector
        } else {
            // dividing by max(norm, eps) keeps the result exactly unit-length
            // away from zero while staying finite near it
            const T inv = T(1) / std::max(nrm, eps);
            for (int c = 0; c < C; ++c) k[c] = v[c] * inv;
        }
    }
    if (x->requires_grad) {
        out->requires_grad = true;
        out->parents = {x};
        TensorT<T>* on = out.get();
        TensorT<T>* xn = x.get();
        out->backward_fn = [on, xn, norms, N, C, eps]() {
            xn->ensure_grad();
            for (int n = 0; n < N; ++n) {
                const T nrm = norms[static_cast<std::size_t>(n)];
                if (nrm == T(0)) continue;  // constant fallback, zero gradient
                const T* v = xn->data.data() + static_cast<std::int64_t>(n) * C;
                const T* g = on->grad.data() + static_cast<std::int64_t>(n) * C;
                T* gx = xn->grad.data() + static_cast<std::int64_t>(n) * C;
                if (nrm < eps) {  // constant divisor regime
                    for (int c = 0; c < C; ++c) gx[c] += g[c] / eps;
                    continue;
                }
                T vg = T(0);
                for (int c = 0; c < C; ++c) vg += v[c] * g[c];
                const T coef = vg / (nrm * nrm * nrm);
                for (int c = 0; c < C; ++c) gx[c] += g[c] / nrm - v[c] * coef;
            }
        };
    }
    return out;
}

#define DS_INSTANTIATE_NN(T)                                                                                   \
    template TensorPtrT<T> pool2d<T>(const TensorPtrT<T>&, PoolKind, int, int);                                \
    template TensorPtrT<T> global_avg_pool<T>(const TensorPtrT<T>&);                                           \
    template TensorPtrT<T> batch_norm2d<T>(const TensorPtrT<T>&, const TensorPtrT<T>&, const TensorPtrT<T>&,   \
                                           std::vector<T>&, std::vector<T>&, bool, T, T);                      \
    template TensorPtrT<T> resize_bilinear<T>(const TensorPtrT<T>&, int, int);                                 \
    template TensorPtrT<T> dropout<T>(const TensorPtrT<T>&, double, std::mt19937_64&);                         \
    template TensorPtrT<T> gather_class<T>(const TensorPtrT<T>&, const LabelMap&);                             \
    template TensorPtrT<T> one_hot<T>(const LabelMap&, int);                                                   \
    template TensorPtrT<T> normalize_channels<T>(const TensorPtrT<T>&, T);

DS_INSTANTIATE_NN(float)
DS_INSTANTIATE_NN(double)

}  // namespace deltaseg
