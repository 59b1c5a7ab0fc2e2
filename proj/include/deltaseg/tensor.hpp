#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace deltaseg {

std::string shape_str(const std::vector<int>& shape);

// Dense N-d float tensor with optional reverse-mode gradient tracking.
// data is flat, row-major. Instantiated for float (training/inference)
// and double (gradient checking).
template <typename T>
struct TensorT : std::enable_shared_from_this<TensorT<T>> {
    using Ptr = std::shared_ptr<TensorT<T>>;

    std::vector<int> shape;
    std::vector<T> data;
    bool requires_grad = false;
    std::vector<T> grad;  // sized on first accumulation; empty otherwise

    // autodiff graph: strong refs keep the graph alive while this node lives
    std::vector<Ptr> parents;
    std::function<void()> backward_fn;

    static Ptr create(std::vector<int> shape, bool requires_grad = false);
    static Ptr from_data(std::vector<int> shape, std::vector<T> values, bool requires_grad = false);
    static Ptr full(std::vector<int> shape, T value, bool requires_grad = false);
    static Ptr scalar(T value, bool requires_grad = false);

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    T item() const;

    bool is_leaf() const { return parents.empty() && !backward_fn; }

    void ensure_grad();
    void zero_grad();
    void accumulate_grad(const T* g, std::int64_t n);

    // Detached copy that shares no graph state.
    Ptr detach(bool requires_grad = false) const;
};

template <typename T>
using TensorPtrT = std::shared_ptr<TensorT<T>>;

using Tensor = TensorT<float>;
using TensorPtr = TensorPtrT<float>;

// Runs reverse-mode accumulation from a scalar root. Every requires_grad
// ancestor ends up with a populated grad buffer. Grads add across calls.
template <typename T>
void backward(const TensorPtrT<T>& root);

// Integer label map, one class index per pixel. Shape [N,H,W].
struct LabelMap {
    int n = 0, h = 0, w = 0;
    std::vector<std::int32_t> v;

    LabelMap() = default;
    LabelMap(int n_, int h_, int w_) : n(n_), h(h_), w(w_), v(static_cast<std::size_t>(n_) * h_ * w_, 0) {}

    std::int64_t numel() const { return static_cast<std::int64_t>(v.size()); }
    std::int32_t& at(int ni, int i, int j) { return v[(static_cast<std::size_t>(ni) * h + i) * w + j]; }
    std::int32_t at(int ni, int i, int j) const { return v[(static_cast<std::size_t>(ni) * h + i) * w + j]; }
};

}  // namespace deltaseg
