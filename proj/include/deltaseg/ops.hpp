#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "deltaseg/tensor.hpp"

namespace deltaseg {

// 2-d convolution geometry. Weight layout:
//   standard:   [out_channels, in_channels/groups, kernel, kernel]
//   transposed: [in_channels, out_channels/groups, kernel, kernel]
struct ConvSpec {
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 1;
    int stride = 1;
    int padding = 0;
    int dilation = 1;
    int groups = 1;
    bool transposed = false;

    void validate() const;
    // (K-1)*d + 1, the spatial span one kernel application covers
    int effective_extent() const { return (kernel - 1) * dilation + 1; }
    int out_size(int in) const;  // spatial out extent for spatial in extent
};

enum class PoolKind { Max, Avg, GlobalAvg };

template <typename T> TensorPtrT<T> conv2d(const TensorPtrT<T>& x, const TensorPtrT<T>& w,
                                           const TensorPtrT<T>& bias, const ConvSpec& spec);
template <typename T> TensorPtrT<T> pool2d(const TensorPtrT<T>& x, PoolKind kind, int window, int stride);
template <typename T> TensorPtrT<T> global_avg_pool(const TensorPtrT<T>& x);

// Running stats are plain buffers owned by the caller; training mode updates
// them with `momentum` and normalizes by biased batch statistics.
template <typename T> TensorPtrT<T> batch_norm2d(const TensorPtrT<T>& x, const TensorPtrT<T>& gamma,
                                                 const TensorPtrT<T>& beta, std::vector<T>& running_mean,
                                                 std::vector<T>& running_var, bool training,
                                                 T eps = T(1e-5), T momentum = T(0.1));

template <typename T> TensorPtrT<T> relu(const TensorPtrT<T>& x);
template <typename T> TensorPtrT<T> relu6(const TensorPtrT<T>& x);
template <typename T> TensorPtrT<T> sigmoid(const TensorPtrT<T>& x);
template <typename T> TensorPtrT<T> prelu(const TensorPtrT<T>& x, const TensorPtrT<T>& slope);
template <typename T> TensorPtrT<T> softmax(const TensorPtrT<T>& x, int axis);
template <typename T> TensorPtrT<T> log_softmax(const TensorPtrT<T>& x, int axis);

// Half-pixel-center sampling (align_corners=false): src = (dst+0.5)*in/out - 0.5,
// clamped at the borders. Equal in/out size is a bitwise copy.
template <typename T> TensorPtrT<T> resize_bilinear(const TensorPtrT<T>& x, int out_h, int out_w);

// Inverted dropout; draws a fresh mask from rng on every call.
template <typename T> TensorPtrT<T> dropout(const TensorPtrT<T>& x, double p, std::mt19937_64& rng);

// Elementwise with NCHW broadcasting (each dim equal or 1 on either side).
template <typename T> TensorPtrT<T> add(const TensorPtrT<T>& a, const TensorPtrT<T>& b);
template <typename T> TensorPtrT<T> sub(const TensorPtrT<T>& a, const TensorPtrT<T>& b);
template <typename T> TensorPtrT<T> mul(const TensorPtrT<T>& a, const TensorPtrT<T>& b);
template <typename T> TensorPtrT<T> div(const TensorPtrT<T>& a, const TensorPtrT<T>& b);

template <typename T> TensorPtrT<T> add_scalar(const TensorPtrT<T>& x, T c);
template <typename T> TensorPtrT<T> mul_scalar(const TensorPtrT<T>& x, T c);
template <typename T> TensorPtrT<T> rsub_scalar(T c, const TensorPtrT<T>& x);  // c - x
template <typename T> TensorPtrT<T> pow_scalar(const TensorPtrT<T>& x, T e);
template <typename T> TensorPtrT<T> neg(const TensorPtrT<T>& x);
template <typename T> TensorPtrT<T> square(const TensorPtrT<T>& x);

// Reductions keep reduced dims as size 1.
template <typename T> TensorPtrT<T> reduce_sum(const TensorPtrT<T>& x, const std::vector<int>& axes);
template <typename T> TensorPtrT<T> reduce_mean(const TensorPtrT<T>& x, const std::vector<int>& axes);
template <typename T> TensorPtrT<T> sum_all(const TensorPtrT<T>& x);   // shape {1}
template <typename T> TensorPtrT<T> mean_all(const TensorPtrT<T>& x);  // shape {1}

template <typename T> TensorPtrT<T> concat(const std::vector<TensorPtrT<T>>& parts, int axis);
template <typename T> TensorPtrT<T> slice(const TensorPtrT<T>& x, int axis, int start, int len);
template <typename T> TensorPtrT<T> permute_hw(const TensorPtrT<T>& x);  // swap axes 2 and 3
template <typename T> TensorPtrT<T> reshape(const TensorPtrT<T>& x, std::vector<int> shape);

// out[n,0,i,j] = x[n, labels(n,i,j), i, j]
template <typename T> TensorPtrT<T> gather_class(const TensorPtrT<T>& x, const LabelMap& labels);
// constant (no-grad) one-hot encoding [N,C,H,W]
template <typename T> TensorPtrT<T> one_hot(const LabelMap& labels, int num_classes);

// Per-sample L2 normalization over the channel axis of an [N,C,1,1] tensor,
// denominator ||v|| + eps. A zero-norm sample falls back to the first unit
// basis vector (constant, zero gradient).
template <typename T> TensorPtrT<T> normalize_channels(const TensorPtrT<T>& x, T eps = T(1e-8));

struct GradCheckReport {
    std::vector<double> max_rel_error;  // one per checked input
    double worst = 0.0;
    bool pass = false;
};

// Central-difference check of reverse-mode gradients for a scalar-valued f.
// Checks every element of every requires_grad input unless max_elems_per_input
// limits it to a seeded random subsample. f is evaluated twice up front; any
// output mismatch raises an error asking for eval mode (e.g. active dropout).
template <typename T>
GradCheckReport grad_check(const std::function<TensorPtrT<T>(const std::vector<TensorPtrT<T>>&)>& f,
                           const std::vector<TensorPtrT<T>>& inputs, T eps, double tol,
                           std::int64_t max_elems_per_input = -1, std::uint64_t sample_seed = 0);

}  // namespace deltaseg
