#include "deltaseg/tensor.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace deltaseg {

std::string shape_str(const std::vector<int>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

namespace {

std::int64_t checked_numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor shape has non-positive dim: " + shape_str(shape));
        n *= d;
    }
    return n;
}

}  // namespace

template <typename T>
typename TensorT<T>::Ptr TensorT<T>::create(std::vector<int> shape, bool requires_grad) {
    auto t = std::make_shared<TensorT<T>>();
    std::int64_t n = checked_numel(shape);
    t->shape = std::move(shape);
    t->data.assign(static_cast<std::size_t>(n), T(0));
    t->requires_grad = requires_grad;
    return t;
}

template <typename T>
typename TensorT<T>::Ptr TensorT<T>::from_data(std::vector<int> shape, std::vector<T> values, bool requires_grad) {
    std::int64_t n = checked_numel(shape);
    if (n != static_cast<std::int64_t>(values.size()))
        throw std::invalid_argument("tensor data length " + std::to_string(values.size()) +
                                    " does not match shape " + shape_str(shape));
    auto t = std::make_shared<TensorT<T>>();
    t->shape = std::move(shape);
    t->data = std::move(values);
    t->requires_grad = requires_grad;
    return t;
}

template <typename T>
typename TensorT<T>::Ptr TensorT<T>::full(std::vector<int> shape, T value, bool requires_grad) {
    auto t = create(std::move(shape), requires_grad);
    std::fill(t->data.begin(), t->data.end(), value);
    return t;
}

template <typename T>
typename TensorT<T>::Ptr TensorT<T>::scalar(T value, bool requires_grad) {
    return from_data({1}, {value}, requires_grad);
}

template <typename T>
T TensorT<T>::item() const {
    if (numel() != 1) throw std::runtime_error("item() requires a single-element tensor, got shape " + shape_str(shape));
    return data[0];
}

template <typename T>
void TensorT<T>::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
}

template <typename T>
void TensorT<T>::zero_grad() {
    std::fill(grad.begin(), grad.end(), T(0));
}

template <typename T>
void TensorT<T>::accumulate_grad(const T* g, std::int64_t n) {
    if (!requires_grad) return;
    if (n != numel()) throw std::runtime_error("gradient length mismatch");
    ensure_grad();
    for (std::int64_t i = 0; i < n; ++i) grad[static_cast<std::size_t>(i)] += g[i];
}

template <typename T>
typename TensorT<T>::Ptr TensorT<T>::detach(bool req) const {
    return from_data(shape, data, req);
}

template <typename T>
void backward(const TensorPtrT<T>& root) {
    if (!root) throw std::invalid_argument("backward: null root");
    if (root->numel() != 1)
        throw std::runtime_error("backward requires a scalar root, got shape " + shape_str(root->shape));

    // post-order DFS; reverse gives a valid topological order root-first
    std::vector<TensorT<T>*> order;
    std::unordered_set<TensorT<T>*> seen;
    std::vector<std::pair<TensorT<T>*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorT<T>* p = node->parents[next++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    if (!root->requires_grad) return;

    // Leaf grads accumulate across backward calls; interior nodes carry the
    // flow of the current pass only, so earlier seeds cannot double-count.
    for (TensorT<T>* node : order) {
        node->ensure_grad();
        if (node->backward_fn) node->zero_grad();
    }
    root->grad[0] += T(1);

    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backward_fn) (*it)->backward_fn();
}

template struct TensorT<float>;
template struct TensorT<double>;
template void backward<float>(const TensorPtrT<float>&);
template void backward<double>(const TensorPtrT<double>&);

}  // namespace deltaseg
