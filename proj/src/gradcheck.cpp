#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "deltaseg/ops.hpp"

namespace deltaseg {

template <typename T>
GradCheckReport grad_check(const std::function<TensorPtrT<T>(const std::vector<TensorPtrT<T>>&)>& f,
                           const std::vector<TensorPtrT<T>>& inputs, T eps, double tol,
                           std::int64_t max_elems_per_input, std::uint64_t sample_seed) {
    auto out1 = f(inputs);
    if (!out1 || out1->numel() != 1) throw std::invalid_argument("grad_check: f must be scalar-valued");
    auto out2 = f(inputs);
    if (out1->data != out2->data)
        throw std::runtime_error("grad_check: f is not deterministic between calls; switch the model to eval "
                                 "mode (disable dropout) before checking gradients");

    for (const auto& in : inputs) in->zero_grad();
    backward(out1);

    std::mt19937_64 rng(sample_seed);
    GradCheckReport rep;
    for (const auto& in : inputs) {
        if (!in->requires_grad) {
            rep.max_rel_error.push_back(0.0);
            continue;
        }
        in->ensure_grad();
        std::vector<std::int64_t> idxs;
        const std::int64_t n = in->numel();
        if (max_elems_per_input > 0 && max_elems_per_input < n) {
            std::uniform_int_distribution<std::int64_t> pick(0, n - 1);
            for (std::int64_t k = 0; k < max_elems_per_input; ++k) idxs.push_back(pick(rng));
        } else {
            idxs.resize(static_cast<std::size_t>(n));
            for (std::int64_t k = 0; k < n; ++k) idxs[static_cast<std::size_t>(k)] = k;
        }
        double worst = 0.0;
        for (std::int64_t i : idxs) {
            const T saved = in->data[static_cast<std::size_t>(i)];
            in->data[static_cast<std::size_t>(i)] = saved + eps;
            const double fp = static_cast<double>(f(inputs)->item());
            in->data[static_cast<std::size_t>(i)] = saved - eps;
            const double fm = static_cast<double>(f(inputs)->item());
            in->data[static_cast<std::size_t>(i)] = saved;
            const double fd = (fp - fm) / (2.0 * static_cast<double>(eps));
            const double ad = static_cast<double>(in->grad[static_cast<std::size_t>(i)]);
            const double rel = std::abs(ad - fd) / (std::abs(ad) + std::abs(fd) + static_cast<double>(eps));
            worst = std::max(worst, rel);
        }
        rep.max_rel_error.push_back(worst);
        rep.worst = std::max(rep.worst, worst);
    }
    rep.pass = rep.worst <= tol;
    return rep;
}

template GradCheckReport grad_check<float>(const std::function<TensorPtrT<float>(const std::vector<TensorPtrT<float>>&)>&,
                                           const std::vector<TensorPtrT<float>>&, float, double, std::int64_t,
                                           std::uint64_t);
template GradCheckReport grad_check<double>(
    const std::function<TensorPtrT<double>(const std::vector<TensorPtrT<double>>&)>&,
    const std::vector<TensorPtrT<double>>&, double, double, std::int64_t, std::uint64_t);

}  // namespace deltaseg
