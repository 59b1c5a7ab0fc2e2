#pragma once

#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "deltaseg/ops.hpp"
#include "deltaseg/tensor.hpp"

namespace deltaseg {

// One named parameter or buffer inside a module tree. Exactly one of
// tensor/buffer is set; buffers (running stats) are never trainable.
template <typename T>
struct ParamRefT {
    std::string path;
    TensorPtrT<T> tensor;
    std::vector<T>* buffer = nullptr;
    bool trainable = false;
};

template <typename T>
using ParamListT = std::vector<ParamRefT<T>>;

template <typename T>
void kaiming_uniform_init(const TensorPtrT<T>& w, int fan_in, std::mt19937_64& rng);

template <typename T>
struct Conv2dLayerT {
    ConvSpec spec;
    TensorPtrT<T> weight;
    TensorPtrT<T> bias;  // null when the conv feeds a BatchNorm

    Conv2dLayerT() = default;
    Conv2dLayerT(ConvSpec s, bool with_bias, std::mt19937_64& rng);

    TensorPtrT<T> forward(const TensorPtrT<T>& x) const { return conv2d(x, weight, bias, spec); }
    void collect(const std::string& prefix, ParamListT<T>& out) const;
    std::int64_t param_count() const;
};

template <typename T>
struct BatchNorm2dLayerT {
    TensorPtrT<T> gamma;
    TensorPtrT<T> beta;
    std::vector<T> running_mean;
    std::vector<T> running_var;
    T eps = T(1e-5);
    T momentum = T(0.1);
    bool training = false;

    BatchNorm2dLayerT() = default;
    explicit BatchNorm2dLayerT(int channels);

    TensorPtrT<T> forward(const TensorPtrT<T>& x) {
        return batch_norm2d(x, gamma, beta, running_mean, running_var, training, eps, momentum);
    }
    void collect(const std::string& prefix, ParamListT<T>& out);
    std::int64_t param_count() const { return gamma->numel() + beta->numel(); }
};

template <typename T>
struct PReLULayerT {
    TensorPtrT<T> slope;  // one learnable slope shared across channels

    PReLULayerT() : slope(TensorT<T>::from_data({1}, {T(0.25)}, true)) {}

    TensorPtrT<T> forward(const TensorPtrT<T>& x) const { return prelu(x, slope); }
    void collect(const std::string& prefix, ParamListT<T>& out) const;
};

template <typename T>
struct DropoutLayerT {
    double p = 0.5;
    bool training = false;
    std::mt19937_64* rng = nullptr;

    TensorPtrT<T> forward(const TensorPtrT<T>& x) const {
        if (!training || p == 0.0) return x;
        return dropout(x, p, *rng);
    }
};

// depthwise KxK -> BN -> ReLU6 -> pointwise 1x1 -> BN -> ReLU6
template <typename T>
struct DSCUnitT {
    Conv2dLayerT<T> depthwise;
    BatchNorm2dLayerT<T> bn_dw;
    Conv2dLayerT<T> pointwise;
    BatchNorm2dLayerT<T> bn_pw;

    DSCUnitT() = default;
    DSCUnitT(int c_in, int c_out, int dilation, std::mt19937_64& rng, int kernel = 3);

    TensorPtrT<T> forward(const TensorPtrT<T>& x);
    void set_training(bool t) { bn_dw.training = bn_pw.training = t; }
    void collect(const std::string& prefix, ParamListT<T>& out);
};

}  // namespace deltaseg
