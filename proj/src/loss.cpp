#include "deltaseg/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace deltaseg {

void LossWeights::validate() const {
    if (std::abs(ce + dice + focal - 1.0) > 1e-12)
        throw std::invalid_argument("loss weights ce+dice+focal must sum to 1");
    double s = 0.0;
    for (double l : head_lambdas) s += l;
    if (std::abs(s - 2.8) > 1e-12) throw std::invalid_argument("head lambdas must sum to 2.8");
    if (focal_gamma < 0.0) throw std::invalid_argument("focal gamma must be >= 0");
    if (dice_smooth < 0.0) throw std::invalid_argument("dice smoothing must be >= 0");
}

namespace {

template <typename T>
void check_target(const TensorPtrT<T>& logits, const LabelMap& target) {
    if (logits->rank() != 4)
        throw std::invalid_argument("loss: logits must be [N,C,H,W], got " + shape_str(logits->shape));
    if (target.n != logits->dim(0) || target.h != logits->dim(2) || target.w != logits->dim(3))
        throw std::invalid_argument("loss: target " + std::to_string(target.n) + "x" + std::to_string(target.h) +
                                    "x" + std::to_string(target.w) + " does not match logits " +
                                    shape_str(logits->shape));
}

}  // namespace

template <typename T>
TensorPtrT<T> ce_loss(const TensorPtrT<T>& logits, const LabelMap& target, const std::vector<T>& class_weights) {
    check_target(logits, target);
    const int C = logits->dim(1);
    if (static_cast<int>(class_weights.size()) != C)
        throw std::invalid_argument("ce_loss: class weight count " + std::to_string(class_weights.size()) +
                                    " does not match class count " + std::to_string(C));

    // per-pixel weight map (constant) and its normalizer
    auto wmap = TensorT<T>::create({target.n, 1, target.h, target.w});
    T wsum = T(0);
    for (std::int64_t i = 0; i < target.numel(); ++i) {
        const std::int32_t y = target.v[static_cast<std::size_t>(i)];
        if (y < 0 || y >= C) {
            const int n = static_cast<int>(i / (target.h * target.w));
            const int r = static_cast<int>(i % (target.h * target.w));
            throw std::invalid_argument("label " + std::to_string(y) + " out of range [0," + std::to_string(C) +
                                        ") at (n=" + std::to_string(n) + ",i=" + std::to_string(r / target.w) +
                                        ",j=" + std::to_string(r % target.w) + ")");
        }
        const T w = class_weights[static_cast<std::size_t>(y)];
        wmap->data[static_cast<std::size_t>(i)] = w;
        wsum += w;
    }
    auto picked = gather_class(log_softmax(logits, 1), target);  // log p_y
    auto weighted = sum_all(mul(picked, wmap));
    return mul_scalar(neg(weighted), T(1) / wsum);
}

template <typename T>
TensorPtrT<T> dice_loss(const TensorPtrT<T>& logits, const LabelMap& target, T smooth) {
    check_target(logits, target);
    const int C = logits->dim(1);
    auto p = softmax(logits, 1);
    auto t = one_hot<T>(target, C);
    auto inter = reduce_sum(mul(p, t), {0, 2, 3});  // [1,C,1,1]
    auto psum = reduce_sum(p, {0, 2, 3});
    auto tsum = reduce_sum(t, {0, 2, 3});
    auto num = add_scalar(mul_scalar(inter, T(2)), smooth);
    auto den = add_scalar(add(psum, tsum), smooth);
    auto dice_per_class = div(num, den);
    return rsub_scalar(T(1), sum_all(mul_scalar(dice_per_class, T(1) / static_cast<T>(C))));
}

template <typename T>
TensorPtrT<T> focal_loss(const TensorPtrT<T>& logits, const LabelMap& target, T gamma) {
    check_target(logits, target);
    if (gamma < T(0)) throw std::invalid_argument("focal_loss: gamma must be >= 0");
    auto lp = gather_class(log_softmax(logits, 1), target);  // log p_y
    auto py = gather_class(softmax(logits, 1), target);      // p_y
    TensorPtrT<T> focus;
    if (gamma == T(0))
        focus = TensorT<T>::full(py->shape, T(1));
    else
        focus = pow_scalar(rsub_scalar(T(1), py), gamma);
    return mean_all(neg(mul(focus, lp)));
}

template <typename T>
LossReportT<T> composite_loss(const TensorPtrT<T>& logits, const LabelMap& target, const LossWeights& w,
                              const std::vector<T>& class_weights) {
    w.validate();
    LossReportT<T> rep;
    auto ce = ce_loss(logits, target, class_weights);
    auto di = dice_loss(logits, target, static_cast<T>(w.dice_smooth));
    auto fo = focal_loss(logits, target, static_cast<T>(w.focal_gamma));
    rep.ce = static_cast<double>(ce->item());
    rep.dice = static_cast<double>(di->item());
    rep.focal = static_cast<double>(fo->item());
    rep.total = add(add(mul_scalar(ce, static_cast<T>(w.ce)), mul_scalar(di, static_cast<T>(w.dice))),
                    mul_scalar(fo, static_cast<T>(w.focal)));
    return rep;
}

template <typename T>
DeepLossReportT<T> deep_supervised_loss(const ModelOutputsT<T>& outputs, const LabelMap& target,
                                        const LossWeights& w, const std::vector<T>& class_weights) {
    w.validate();
    if (!outputs.primary) throw std::invalid_argument("deep_supervised_loss: missing primary logits");
    if (outputs.aux.size() != 3)
        throw std::invalid_argument("deep_supervised_loss: expected 4 heads in train mode, got " +
                                    std::to_string(outputs.aux.size() + 1));
    const int H = outputs.primary->dim(2), W = outputs.primary->dim(3);

    DeepLossReportT<T> rep;
    double lambda_sum = 0.0;
    for (double l : w.head_lambdas) lambda_sum += l;

    TensorPtrT<T> total;
    for (int k = 0; k < 4; ++k) {
        TensorPtrT<T> logits = k == 0 ? outputs.primary : outputs.aux[static_cast<std::size_t>(k - 1)];
        if (k > 0) logits = resize_bilinear(logits, H, W);  // upsampled as logits, pre-softmax
        auto comp = composite_loss(logits, target, w, class_weights);
        if (k == 0) rep.primary = comp;
        rep.head_losses[static_cast<std::size_t>(k)] = static_cast<double>(comp.total->item());
        auto term = mul_scalar(comp.total, static_cast<T>(w.head_lambdas[static_cast<std::size_t>(k)]));
        total = total ? add(total, term) : term;
    }
    rep.total = mul_scalar(total, static_cast<T>(1.0 / lambda_sum));
    return rep;
}

std::vector<double> auto_class_weights(const std::vector<std::int64_t>& counts) {
    const std::size_t C = counts.size();
    if (C == 0) throw std::invalid_argument("auto_class_weights: empty count vector");
    std::int64_t total = 0;
    for (std::int64_t c : counts) {
        if (c < 0) throw std::invalid_argument("auto_class_weights: negative pixel count");
        total += c;
    }
    std::vector<double> w(C);
    for (std::size_t c = 0; c < C; ++c) {
        double v = counts[c] == 0 ? 50.0 : static_cast<double>(total) / (static_cast<double>(C) * counts[c]);
        w[c] = std::clamp(v, 0.1, 50.0);
    }
    return w;
}

#define DS_INSTANTIATE_LOSS(T)                                                                                 \
    template TensorPtrT<T> ce_loss<T>(const TensorPtrT<T>&, const LabelMap&, const std::vector<T>&);           \
    template TensorPtrT<T> dice_loss<T>(const TensorPtrT<T>&, const LabelMap&, T);                             \
    template TensorPtrT<T> focal_loss<T>(const TensorPtrT<T>&, const LabelMap&, T);                            \
    template LossReportT<T> composite_loss<T>(const TensorPtrT<T>&, const LabelMap&, const LossWeights&,       \
                                              const std::vector<T>&);                                          \
    template DeepLossReportT<T> deep_supervised_loss<T>(const ModelOutputsT<T>&, const LabelMap&,              \
                                                        const LossWeights&, const std::vector<T>&);

DS_INSTANTIATE_LOSS(float)
DS_INSTANTIATE_LOSS(double)

}  // namespace deltaseg
