#pragma once

#include <vector>

#include "deltaseg/network.hpp"
#include "deltaseg/ops.hpp"

namespace deltaseg {

// Composite-loss coefficients and deep-supervision head weights. The three
// term weights are fixed to sum to 1 and the head weights to 2.8.
struct LossWeights {
    double ce = 0.5;
    double dice = 0.3;
    double focal = 0.2;
    std::array<double, 4> head_lambdas{1.0, 0.8, 0.6, 0.4};  // dec1..dec4
    double focal_gamma = 2.0;
    double dice_smooth = 1.0;

    void validate() const;
};

template <typename T>
struct LossReportT {
    TensorPtrT<T> total;  // scalar, on the autodiff graph
    double ce = 0.0;
    double dice = 0.0;
    double focal = 0.0;
};

template <typename T>
struct DeepLossReportT {
    TensorPtrT<T> total;
    std::array<double, 4> head_losses{};  // composite value per head, dec1..dec4
    LossReportT<T> primary;               // term breakdown of the dec1 head
};

// Class-weighted cross entropy, normalized by the summed pixel weights.
template <typename T>
TensorPtrT<T> ce_loss(const TensorPtrT<T>& logits, const LabelMap& target, const std::vector<T>& class_weights);

// 1 - mean over classes of (2*sum(p*t)+s)/(sum(p)+sum(t)+s), softmax probabilities.
template <typename T>
TensorPtrT<T> dice_loss(const TensorPtrT<T>& logits, const LabelMap& target, T smooth = T(1));

// mean over pixels of -(1-p_y)^gamma log p_y
template <typename T>
TensorPtrT<T> focal_loss(const TensorPtrT<T>& logits, const LabelMap& target, T gamma);

template <typename T>
LossReportT<T> composite_loss(const TensorPtrT<T>& logits, const LabelMap& target, const LossWeights& w,
                              const std::vector<T>& class_weights);

// Deep-supervision total: aux logits are bilinearly upsampled (as logits) to
// the primary resolution, each head scored by the composite loss, combined as
// sum(lambda_k * l_k) / sum(lambda_k).
template <typename T>
DeepLossReportT<T> deep_supervised_loss(const ModelOutputsT<T>& outputs, const LabelMap& target,
                                        const LossWeights& w, const std::vector<T>& class_weights);

// w_c = total/(C*count_c) clamped to [0.1, 50]; zero-count classes get the
// upper clamp.
std::vector<double> auto_class_weights(const std::vector<std::int64_t>& class_pixel_counts);

}  // namespace deltaseg
