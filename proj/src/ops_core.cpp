#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "deltaseg/ops.hpp"

namespace deltaseg {

namespace {

// shapes padded with leading 1s to rank 4
std::array<int, 4> pad4(const std::vector<int>& s) {
    if (s.size() > 4) throw std::invalid_argument("elementwise ops support rank <= 4, got " + shape_str(s));
    std::array<int, 4> d{1, 1, 1, 1};
    for (std::size_t i = 0; i < s.size(); ++i) d[4 - s.size() + i] = s[i];
    return d;
}

struct Broadcast4 {
    std::array<int, 4> out{};
    std::array<std::int64_t, 4> sa{}, sb{};
    std::vector<int> out_shape;
    std::int64_t n = 1;

    Broadcast4(const std::vector<int>& a, const std::vector<int>& b) {
        auto da = pad4(a), db = pad4(b);
        for (int i = 0; i < 4; ++i) {
            if (da[i] != db[i] && da[i] != 1 && db[i] != 1)
                throw std::invalid_argument("cannot broadcast shapes " + shape_str(a) + " and " + shape_str(b) +
                                            " at dim " + std::to_string(i));
            out[i] = std::max(da[i], db[i]);
        }
        std::int64_t ra = 1, rb = 1;
        for (int i = 3; i >= 0; --i) {
            sa[i] = (da[i] == 1) ? 0 : ra;
            sb[i] = (db[i] == 1) ? 0 : rb;
            ra *= da[i];
            rb *= db[i];
        }
        std::size_t rank = std::max(a.size(), b.size());
        out_shape.assign(out.begin() + (4 - rank), out.end());
        for (int i = 0; i < 4; ++i) n *= out[i];
    }
};

template <typename T, typename F>
void broadcast_apply(const Broadcast4& bc, const T* a, const T* b, T* o, F f) {
    std::int64_t idx = 0;
    for (int i0 = 0; i0 < bc.out[0]; ++i0)
        for (int i1 = 0; i1 < bc.out[1]; ++i1)
            for (int i2 = 0; i2 < bc.out[2]; ++i2) {
                const T* pa = a + i0 * bc.sa[0] + i1 * bc.sa[1] + i2 * bc.sa[2];
                const T* pb = b + i0 * bc.sb[0] + i1 * bc.sb[1] + i2 * bc.sb[2];
                const std::int64_t s3a = bc.sa[3], s3b = bc.sb[3];
                for (int i3 = 0; i3 < bc.out[3]; ++i3) o[idx++] = f(pa[i3 * s3a], pb[i3 * s3b]);
            }
}

// accumulate df(out position) into the (possibly broadcast) operand grad
template <typename T, typename F>
void broadcast_grad(const Broadcast4& bc, bool into_a, const T* a, const T* b, const T* gout, T* gacc, F df) {
    std::int64_t idx = 0;
    for (int i0 = 0; i0 < bc.out[0]; ++i0)
        for (int i1 = 0; i1 < bc.out[1]; ++i1)
            for (int i2 = 0; i2 < bc.out[2]; ++i2) {
                const T* pa = a + i0 * bc.sa[0] + i1 * bc.sa[1] + i2 * bc.sa[2];
                const T* pb = b + i0 * bc.sb[0] + i1 * bc.sb[1] + i2 * bc.sb[2];
                const std::array<std::int64_t, 4>& st = into_a ? bc.sa : bc.sb;
                T* pg = gacc + i0 * st[0] + i1 * st[1] + i2 * st[2];
                for (int i3 = 0; i3 < bc.out[3]; ++i3)
                    pg[i3 * st[3]] += gout[idx++] * df(pa[i3 * bc.sa[3]], pb[i3 * bc.sb[3]]);
            }
}

enum class BinOp { Add, Sub, Mul, Div };

template <typename T>
TensorPtrT<T> binary_op(const TensorPtrT<T>& a, const TensorPtrT<T>& b, BinOp op) {
    Broadcast4 bc(a->shape, b->shape);
    auto out = TensorT<T>::create(bc.out_shape);
    const T* pa = a->data.data();
    const T* pb = b->data.data();
    T* po = out->data.data();
    switch (op) {
        case BinOp::Add: broadcast_apply<T>(bc, pa, pb, po, [](T x, T y) { return x + y; }); break;
        case BinOp::Sub: broadcast_apply<T>(bc, pa, pb, po, [](T x, T y) { return x - y; }); break;
        case BinOp::Mul: broadcast_apply<T>(bc, pa, pb, po, [](T x, T y) { return x * y; }); break;
        case BinOp::Div: broadcast_apply<T>(bc, pa, pb, po, [](T x, T y) { return x / y; }); break;
    }
    if (a->requires_grad || b->requires_grad) {
        out->requires_grad = true;
        out->parents = {a, b};
        TensorT<T>* on = out.get();
        TensorT<T>* an = a.get();
        TensorT<T>* bn = b.get();
        out->backward_fn = [on, an, bn, bc, op]() {
            const T* g = on->grad.data();
            const T* da = an->data.data();
            const T* db = bn->data.data();
            if (an->requires_grad) {
                an->ensure_grad();
                T* ga = an->grad.data();
                switch (op) {
                    case BinOp::Add:
                    case BinOp::Sub: broadcast_grad<T>(bc, true, da, db, g, ga, [](T, T) { return T(1); }); break;
                    case BinOp::Mul: broadcast_grad<T>(bc, true, da, db, g, ga, [](T, T y) { return y; }); break;
                    case BinOp::Div: broadcast_grad<T>(bc, true, da, db, g, ga, [](T, T y) { return T(1) / y; }); break;
                }
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                T* gb = bn->grad.data();
                switch (op) {
                    case BinOp::Add: broadcast_grad<T>(bc, false, da, db, g, gb, [](T, T) { return T(1); }); break;
                    case BinOp::Sub: broadcast_grad<T>(bc, false, da, db, g, gb, [](T, T) { return T(-1); }); break;
                    case BinOp::Mul: broadcast_grad<T>(bc, false, da, db, g, gb, [](T x, T) { return x; }); break;
                    case BinOp::Div:
                        broadcast_grad<T>(bc, false, da, db, g, gb, [](T x, T y) { return -x / (y * y); });
                        break;
                }
            }
        };
    }
    return out;
}

template <typename T, typename Fwd, typename Dfx>
TensorPtrT<T> unary_op(const TensorPtrT<T>& x, Fwd fwd, Dfx dfx) {
    auto out = TensorT<T>::create(x->shape);
    const std::int64_t n = x->numel();
    for (std::int64_t i = 0; i < n; ++i) out->data[i] = fwd(x->data[i]);
    if (x->requires_grad) {
        out->requires_grad = true;
        out->parents = {x};
        TensorT<T>* on = out.get();
        TensorT<T>* xn = x.get();
        out->backward_fn = [on, xn, dfx, n]() {
            xn->ensure_grad();
            for (std::int64_t i = 0; i < n; ++i) xn->grad[i] += on->grad[i] * dfx(xn->data[i], on->data[i]);
        };
    }
    return out;
}

}  // namespace

template <typename T> TensorPtrT<T> add(const TensorPtrT<T>& a, const TensorPtrT<T>& b) { return binary_op(a, b, BinOp::Add); }
template <typename T> TensorPtrT<T> sub(const TensorPtrT<T>& a, const TensorPtrT<T>& b) { return binary_op(a, b, BinOp::Sub); }
template <typename T> TensorPtrT<T> mul(const TensorPtrT<T>& a, const TensorPtrT<T>& b) { return binary_op(a, b, BinOp::Mul); }
template <typename T> TensorPtrT<T> div(const TensorPtrT<T>& a, const TensorPtrT<T>& b) { return binary_op(a, b, BinOp::Div); }

template <typename T> TensorPtrT<T> add_scalar(const TensorPtrT<T>& x, T c) {
    return unary_op(x, [c](T v) { return v + c; }, [](T, T) { return T(1); });
}
template <typename T> TensorPtrT<T> mul_scalar(const TensorPtrT<T>& x, T c) {
    return unary_op(x, [c](T v) { return v * c; }, [c](T, T) { return c; });
}
template <typename T> TensorPtrT<T> rsub_scalar(T c, const TensorPtrT<T>& x) {
    return unary_op(x, [c](T v) { return c - v; }, [](T, T) { return T(-1); });
}
template <typename T> TensorPtrT<T> pow_scalar(const TensorPtrT<T>& x, T e) {
    return unary_op(x, [e](T v) { return std::pow(v, e); },
                    [e](T v, T) { return (v == T(0) && e < T(1)) ? T(0) : e * std::pow(v, e - T(1)); });
}
template <typename T> TensorPtrT<T> neg(const TensorPtrT<T>& x) {
    return unary_op(x, [](T v) { return -v; }, [](T, T) { return T(-1); });
}
template <typename T> TensorPtrT<T> square(const TensorPtrT<T>& x) {
    return unary_op(x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T> TensorPtrT<T> relu(const TensorPtrT<T>& x) {
    return unary_op(x, [](T v) { return v > T(0) ? v : T(0); },
                    [](T v, T) { return v > T(0) ? T(1) : T(0); });
}
template <typename T> TensorPtrT<T> relu6(const TensorPtrT<T>& x) {
    return unary_op(x, [](T v) { return v < T(0) ? T(0) : (v > T(6) ? T(6) : v); },
                    [](T v, T) { return (v > T(0) && v < T(6)) ? T(1) : T(0); });
}
template <typename T> TensorPtrT<T> sigmoid(const TensorPtrT<T>& x) {
    return unary_op(x, [](T v) { return v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v)); },
                    [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
TensorPtrT<T> prelu(const TensorPtrT<T>& x, const TensorPtrT<T>& slope) {
    if (slope->numel() != 1) throw std::invalid_argument("prelu slope must be a single shared scalar");
    auto out = TensorT<T>::create(x->shape);
    const T a = slope->data[0];
    const std::int64_t n = x->numel();
    for (std::int64_t i = 0; i < n; ++i) {
        T v = x->data[i];
        out->data[i] = v > T(0) ? v : a * v;
    }
    if (x->requires_grad || slope->requires_grad) {
        out->requires_grad = true;
        out->parents = {x, slope};
        TensorT<T>* on = out.get();
        TensorT<T>* xn = x.get();
        TensorT<T>* an = slope.get();
        out->backward_fn = [on, xn, an, a, n]() {
            const T* g = on->grad.data();
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (std::int64_t i = 0; i < n; ++i) xn->grad[i] += g[i] * (xn->data[i] > T(0) ? T(1) : a);
            }
            if (an->requires_grad) {
                an->ensure_grad();
                T acc = T(0);
                for (std::int64_t i = 0; i < n; ++i)
                    if (xn->data[i] <= T(0)) acc += g[i] * xn->data[i];
                an->grad[0] += acc;
            }
        };
    }
    return out;
}

namespace {

// iteration split for an axis-wise op: outer x axis x inner
template <typename T>
void axis_extents(const TensorPtrT<T>& x, int axis, std::int64_t& outer, std::int64_t& len, std::int64_t& inner) {
    if (axis < 0 || axis >= x->rank())
        throw std::invalid_argument("axis " + std::to_string(axis) + " invalid for shape " + shape_str(x->shape));
    outer = inner = 1;
    len = x->dim(axis);
    for (int i = 0; i < axis; ++i) outer *= x->dim(i);
    for (int i = axis + 1; i < x->rank(); ++i) inner *= x->dim(i);
}

}  // namespace

template <typename T>
TensorPtrT<T> softmax(const TensorPtrT<T>& x, int axis) {
    std::int64_t outer, len, inner;
    axis_extents(x, axis, outer, len, inner);
    auto out = TensorT<T>::create(x->shape);
    for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t in = 0; in < inner; ++in) {
            const T* px = x->data.data() + o * len * inner + in;
            T* py = out->data.data() + o * len * inner + in;
            T m = px[0];
            for (std::int64_t k = 1; k < len; ++k) m = std::max(m, px[k * inner]);
            T s = T(0);
            for (std::int64_t k = 0; k < len; ++k) {
                T e = std::exp(px[k * inner] - m);
                py[k * inner] = e;
                s += e;
            }
            for (std::int64_t k = 0; k < len; ++k) py[k * inner] /= s;
        }
    if (x->requires_grad) {
        out->requires_grad = true;
        out->parents = {x};
        TensorT<T>* on = out.get();
        TensorT<T>* xn = x.get();
        out->backward_fn = [on, xn, outer, len, inner]() {
            xn->ensure_grad();
            for (std::int64_t o = 0; o < outer; ++o)
                for (std::int64_t in = 0; in < inner; ++in) {
                    const T* p = on->data.data() + o * len * inner + in;
                    const T* g = on->grad.data() + o * len * inner + in;
                    T* gx = xn->grad.data() + o * len * inner + in;
                    T dot = T(0);
                    for (std::int64_t k = 0; k < len; ++k) dot += g[k * inner] * p[k * inner];
                    for (std::int64_t k = 0; k < len; ++k) gx[k * inner] += p[k * inner] * (g[k * inner] - dot);
                }
        };
    }
    return out;
}

template <typename T>
TensorPtrT<T> log_softmax(const TensorPtrT<T>& x, int axis) {
    std::int64_t outer, len, inner;
    axis_extents(x, axis, outer, len, inner);
    auto out = TensorT<T>::create(x->shape);
    for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t in = 0; in < inner; ++in) {
            const T* px = x->data.data() + o * len * inner + in;
            T* py = out->data.data() + o * len * inner + in;
            T m = px[0];
            for (std::int64_t k = 1; k < len; ++k) m = std::max(m, px[k * inner]);
            T s = T(0);
            for (std::int64_t k = 0; k < len; ++k) s += std::exp(px[k * inner] - m);
            T lse = m + std::log(s);
            for (std::int64_t k = 0; k < len; ++k) py[k * inner] = px[k * inner] - lse;
        }
    if (x->requires_grad) {
        out->requires_grad = true;
        out->parents = {x};
        TensorT<T>* on = out.get();
        TensorT<T>* xn = x.get();
        out->backward_fn = [on, xn, outer, len, inner]() {
            xn->ensure_grad();
            for (std::int64_t o = 0; o < outer; ++o)
                for (std::int64_t in = 0; in < inner; ++in) {
                    const T* y = on->data.data() + o * len * inner + in;
                    const T* g = on->grad.data() + o * len * inner + in;
                    T* gx = xn->grad.data() + o * len * inner + in;
                    T gsum = T(0);
                    for (std::int64_t k = 0; k < len; ++k) gsum += g[k * inner];
                    for (std::int64_t k = 0; k < len; ++k) gx[k * inner] += g[k * inner] - std::exp(y[k * inner]) * gsum;
                }
        };
    }
    return out;
}

template <typename T>
TensorPtrT<T> reduce_sum(const TensorPtrT<T>& x, const std::vector<int>& axes) {
    std::vector<int> out_shape = x->shape;
    for (int a : axes) {
        if (a < 0 || a >= x->rank())
            throw std::invalid_argument("reduce axis " + std::to_string(a) + " invalid for " + shape_str(x->shape));
        out_shape[static_cast<std::size_t>(a)] = 1;
    }
    auto out = TensorT<T>::create(out_shape);
    Broadcast4 bc(out_shape, x->shape);  // out broadcasts over x
    // forward: accumulate x into out along broadcast dims
    {
        T* po = out->data.data();
        const T* px = x->data.data();
        std::int64_t idx = 0;
        for (int i0 = 0; i0 < bc.out[0]; ++i0)
            for (int i1 = 0; i1 < bc.out[1]; ++i1)
                for (int i2 = 0; i2 < bc.out[2]; ++i2) {
                    T* p = po + i0 * bc.sa[0] + i1 * bc.sa[1] + i2 * bc.sa[2];
                    for (int i3 = 0; i3 < bc.out[3]; ++i3) p[i3 * bc.sa[3]] += px[idx++];
                }
    }
    if (x->requires_grad) {
        out->requires_grad = true;
        out->parents = {x};
        TensorT<T>* on = out.get();
        TensorT<T>* xn = x.get();
        out->backward_fn = [on, xn, bc]() {
            xn->ensure_grad();
            const T* g = on->grad.data();
            T* gx = xn->grad.data();
            std::int64_t idx = 0;
            for (int i0 = 0; i0 < bc.out[0]; ++i0)
                for (int i1 = 0; i1 < bc.out[1]; ++i1)
                    for (int i2 = 0; i2 < bc.out[2]; ++i2) {
                        const T* p = g + i0 * bc.sa[0] + i1 * bc.sa[1] + i2 * bc.sa[2];
                        for (int i3 = 0; i3 < bc.out[3]; ++i3) gx[idx++] += p[i3 * bc.sa[3]];
                    }
        };
    }
    return out;
}

template <typename T>
TensorPtrT<T> reduce_mean(const TensorPtrT<T>& x, const std::vector<int>& axes) {
    std::int64_t k = 1;
    for (int a : axes) k *= x->dim(a);
    return mul_scalar(reduce_sum(x, axes), T(1) / static_cast<T>(k));
}

template <typename T>
TensorPtrT<T> sum_all(const TensorPtrT<T>& x) {
    std::vector<int> axes(static_cast<std::size_t>(x->rank()));
    for (int i = 0; i < x->rank(); ++i) axes[static_cast<std::size_t>(i)] = i;
    return reshape(reduce_sum(x, axes), {1});
}

template <typename T>
TensorPtrT<T> mean_all(const TensorPtrT<T>& x) {
    return mul_scalar(sum_all(x), T(1) / static_cast<T>(x->numel()));
}

template <typename T>
TensorPtrT<T> concat(const std::vector<TensorPtrT<T>>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const int rank = parts[0]->rank();
    if (axis < 0 || axis >= rank) throw std::invalid_argument("concat: axis out of range");
    std::vector<int> out_shape = parts[0]->shape;
    int total = 0;
    for (const auto& p : parts) {
        if (p->rank() != rank) throw std::invalid_argument("concat: rank mismatch");
        for (int i = 0; i < rank; ++i)
            if (i != axis && p->dim(i) != parts[0]->dim(i))
                throw std::invalid_argument("concat: dim " + std::to_string(i) + " mismatch: " +
                                            shape_str(p->shape) + " vs " + shape_str(parts[0]->shape));
        total += p->dim(axis);
    }
    out_shape[static_cast<std::size_t>(axis)] = total;
    auto out = TensorT<T>::create(out_shape);

    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= parts[0]->dim(i);
    for (int i = axis + 1; i < rank; ++i) inner *= parts[0]->dim(i);

    std::vector<std::int64_t> offs;  // element offset of each part along axis
    std::int64_t off = 0;
    for (const auto& p : parts) {
        offs.push_back(off);
        off += p->dim(axis);
    }
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
        const auto& p = parts[pi];
        const std::int64_t len = p->dim(axis);
        for (std::int64_t o = 0; o < outer; ++o)
            std::copy_n(p->data.data() + o * len * inner, len * inner,
                        out->data.data() + (o * total + offs[pi]) * inner);
    }
    bool rg = false;
    for (const auto& p : parts) rg = rg || p->requires_grad;
    if (rg) {
        out->requires_grad = true;
        out->parents = parts;
        TensorT<T>* on = out.get();
        std::vector<TensorT<T>*> raw;
        for (const auto& p : parts) raw.push_back(p.get());
        out->backward_fn = [on, raw, offs, outer, inner, total]() {
            for (std::size_t pi = 0; pi < raw.size(); ++pi) {
                TensorT<T>* p = raw[pi];
                if (!p->requires_grad) continue;
                p->ensure_grad();
                const std::int64_t len = p->numel() / (outer * inner);
                for (std::int64_t o = 0; o < outer; ++o) {
                    const T* g = on->grad.data() + (o * total + offs[pi]) * inner;
                    T* gp = p->grad.data() + o * len * inner;
                    for (std::int64_t i = 0; i < len * inner; ++i) gp[i] += g[i];
                }
            }
        };
    }
    return out;
}

template <typename T>
TensorPtrT<T> slice(const TensorPtrT<T>& x, int axis, int start, int len) {
    if (axis < 0 || axis >= x->rank()) throw std::invalid_argument("slice: axis out of range");
    if (start < 0 || len <= 0 || start + len > x->dim(axis))
        throw std::invalid_argument("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                                    ") exceeds dim " + std::to_string(x->dim(axis)));
    std::vector<int> out_shape = x->shape;
    out_shape[static_cast<std::size_t>(axis)] = len;
    auto out = TensorT<T>::create(out_shape);
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= x->dim(i);
    for (int i = axis + 1; i < x->rank(); ++i) inner *= x->dim(i);
    const std::int64_t full = x->dim(axis);
    for (std::int64_t o = 0; o < outer; ++o)
        std::copy_n(x->data.data() + (o * full + start) * inner, static_cast<std::int64_t>(len) * inner,
                    out->data.data() + o * len * inner);
    if (x->requires_grad) {
        out->requires_grad = true;
        out->parents = {x};
        TensorT<T>* on = out.get();
        TensorT<T>* xn = x.get();
        out->backward_fn = [on, xn, outer, inner, full, start, len]() {
            xn->ensure_grad();
            for (std::int64_t o = 0; o < outer; ++o) {
                const T* g = on->grad.data() + o * len * inner;
                T* gx = xn->grad.data() + (o * full + start) * inner;
                for (std::int64_t i = 0; i < len * inner; ++i) gx[i] += g[i];
            }
        };
    }
    return out;
}

template <typename T>
TensorPtrT<T> permute_hw(const TensorPtrT<T>& x) {
    if (x->rank() != 4) throw std::invalid_argument("permute_hw expects rank-4, got " + shape_str(x->shape));
    const int n = x->dim(0), c = x->dim(1), h = x->dim(2), w = x->dim(3);
    auto out = TensorT<T>::create({n, c, w, h});
    for (int ni = 0; ni < n * c; ++ni) {
        const T* px = x->data.data() + static_cast<std::int64_t>(ni) * h * w;
        T* py = out->data.data() + static_cast<std::int64_t>(ni) * h * w;
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) py[j * h + i] = px[i * w + j];
    }
    if (x->requires_grad) {
        out->requires_grad = true;
        out->parents = {x};
        TensorT<T>* on = out.get();
        TensorT<T>* xn = x.get();
        out->backward_fn = [on, xn, n, c, h, w]() {
            xn->ensure_grad();
            for (int ni = 0; ni < n * c; ++ni) {
                const T* g = on->grad.data() + static_cast<std::int64_t>(ni) * h * w;
                T* gx = xn->grad.data() + static_cast<std::int64_t>(ni) * h * w;
                for (int i = 0; i < h; ++i)
                    for (int j = 0; j < w; ++j) gx[i * w + j] += g[j * h + i];
            }
        };
    }
    return out;
}

template <typename T>
TensorPtrT<T> reshape(const TensorPtrT<T>& x, std::vector<int> shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    if (n != x->numel())
        throw std::invalid_argument("reshape: " + shape_str(x->shape) + " -> " + shape_str(shape) + " changes numel");
    auto out = TensorT<T>::from_data(std::move(shape), x->data);
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

#define DS_INSTANTIATE_CORE(T)                                                              \
    template TensorPtrT<T> add<T>(const TensorPtrT<T>&, const TensorPtrT<T>&);              \
    template TensorPtrT<T> sub<T>(const TensorPtrT<T>&, const TensorPtrT<T>&);              \
    template TensorPtrT<T> mul<T>(const TensorPtrT<T>&, const TensorPtrT<T>&);              \
    template TensorPtrT<T> div<T>(const TensorPtrT<T>&, const TensorPtrT<T>&);              \
    template TensorPtrT<T> add_scalar<T>(const TensorPtrT<T>&, T);                          \
    template TensorPtrT<T> mul_scalar<T>(const TensorPtrT<T>&, T);                          \
    template TensorPtrT<T> rsub_scalar<T>(T, const TensorPtrT<T>&);                         \
    template TensorPtrT<T> pow_scalar<T>(const TensorPtrT<T>&, T);                          \
    template TensorPtrT<T> neg<T>(const TensorPtrT<T>&);                                    \
    template TensorPtrT<T> square<T>(const TensorPtrT<T>&);                                 \
    template TensorPtrT<T> relu<T>(const TensorPtrT<T>&);                                   \
    template TensorPtrT<T> relu6<T>(const TensorPtrT<T>&);                                  \
    template TensorPtrT<T> sigmoid<T>(const TensorPtrT<T>&);                                \
    template TensorPtrT<T> prelu<T>(const TensorPtrT<T>&, const TensorPtrT<T>&);            \
    template TensorPtrT<T> softmax<T>(const TensorPtrT<T>&, int);                           \
    template TensorPtrT<T> log_softmax<T>(const TensorPtrT<T>&, int);                       \
    template TensorPtrT<T> reduce_sum<T>(const TensorPtrT<T>&, const std::vector<int>&);    \
    template TensorPtrT<T> reduce_mean<T>(const TensorPtrT<T>&, const std::vector<int>&);   \
    template TensorPtrT<T> sum_all<T>(const TensorPtrT<T>&);                                \
    template TensorPtrT<T> mean_all<T>(const TensorPtrT<T>&);                               \
    template TensorPtrT<T> concat<T>(const std::vector<TensorPtrT<T>>&, int);               \
    template TensorPtrT<T> slice<T>(const TensorPtrT<T>&, int, int, int);                   \
    template TensorPtrT<T> permute_hw<T>(const TensorPtrT<T>&);                             \
    template TensorPtrT<T> reshape<T>(const TensorPtrT<T>&, std::vector<int>);

DS_INSTANTIATE_CORE(float)
DS_INSTANTIATE_CORE(double)

}  // namespace deltaseg
