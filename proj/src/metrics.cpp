#include "deltaseg/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace deltaseg {

ConfusionAccumulator::ConfusionAccumulator(int num_classes) : c_(num_classes) {
    if (num_classes < 2) throw std::invalid_argument("confusion matrix needs at least 2 classes");
    m_.assign(static_cast<std::size_t>(c_) * c_, 0);
}

std::int64_t ConfusionAccumulator::total() const {
    return std::accumulate(m_.begin(), m_.end(), static_cast<std::int64_t>(0));
}

void ConfusionAccumulator::add(const LabelMap& pred, const LabelMap& target) {
    if (pred.n != target.n || pred.h != target.h || pred.w != target.w)
        throw std::invalid_argument("confusion add: prediction " + std::to_string(pred.n) + "x" +
                                    std::to_string(pred.h) + "x" + std::to_string(pred.w) +
                                    " does not match target " + std::to_string(target.n) + "x" +
                                    std::to_string(target.h) + "x" + std::to_string(target.w));
    for (std::int64_t i = 0; i < pred.numel(); ++i) {
        const std::int32_t p = pred.v[static_cast<std::size_t>(i)];
        const std::int32_t t = target.v[static_cast<std::size_t>(i)];
        if (p < 0 || p >= c_ || t < 0 || t >= c_)
            throw std::invalid_argument("confusion add: label outside [0," + std::to_string(c_) + ")");
        ++m_[static_cast<std::size_t>(t) * c_ + p];
    }
}

void ConfusionAccumulator::merge(const ConfusionAccumulator& other) {
    if (other.c_ != c_) throw std::invalid_argument("confusion merge: class count mismatch");
    for (std::size_t i = 0; i < m_.size(); ++i) m_[i] += other.m_[i];
}

MetricsReport score(const ConfusionAccumulator& acc, const std::vector<std::string>& class_names) {
    const int C = acc.num_classes();
    MetricsReport rep;
    std::int64_t correct = 0;

    double miou_sum = 0.0, f1_sum = 0.0;
    int defect_present = 0;

    for (int c = 0; c < C; ++c) {
        ClassScore s;
        s.name = c < static_cast<int>(class_names.size()) ? class_names[static_cast<std::size_t>(c)]
                                                          : "class_" + std::to_string(c);
        std::int64_t tp = acc.count(c, c), fp = 0, fn = 0;
        for (int o = 0; o < C; ++o) {
            if (o == c) continue;
            fp += acc.count(o, c);
            fn += acc.count(c, o);
        }
        correct += tp;
        std::int64_t truth = tp + fn;
        s.pixels = truth;
        const std::int64_t denom = tp + fp + fn;
        if (denom > 0) {  // class seen in prediction or target
            s.iou = static_cast<double>(tp) / static_cast<double>(denom);
            s.dice = 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
            if (c > 0) {
                miou_sum += *s.iou;
                f1_sum += *s.dice;
                ++defect_present;
            }
        }
        rep.per_class.push_back(std::move(s));
    }
    if (defect_present > 0) {
        rep.defect_miou = miou_sum / defect_present;
        rep.mean_f1 = f1_sum / defect_present;
    }
    const std::int64_t total = acc.total();
    rep.pixel_accuracy = total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
    return rep;
}

MetricsReport accumulate_and_score(ConfusionAccumulator& acc, const LabelMap& pred, const LabelMap& target,
                                   const std::vector<std::string>& class_names) {
    acc.add(pred, target);
    return score(acc, class_names);
}

namespace {

std::string fmt_opt(const std::optional<double>& v, const char* undefined_marker) {
    if (!v) return undefined_marker;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", *v);
    return buf;
}

}  // namespace

std::string MetricsReport::to_csv() const {
    std::string out = "class,iou,dice,pixels\n";
    for (const auto& s : per_class) {
        out += s.name + "," + fmt_opt(s.iou, "undefined") + "," + fmt_opt(s.dice, "undefined") + "," +
               std::to_string(s.pixels) + "\n";
    }
    out += "defect_mIoU," + fmt_opt(defect_miou, "undefined") + "," + fmt_opt(mean_f1, "undefined") + ",\n";
    return out;
}

std::string MetricsReport::to_pretty() const {
    std::size_t w = 12;
    for (const auto& s : per_class) w = std::max(w, s.name.size() + 2);
    char buf[160];
    std::string out;
    std::snprintf(buf, sizeof(buf), "%-*s %10s %10s %12s\n", static_cast<int>(w), "class", "IoU", "Dice", "pixels");
    out += buf;
    for (const auto& s : per_class) {
        std::snprintf(buf, sizeof(buf), "%-*s %10s %10s %12lld\n", static_cast<int>(w), s.name.c_str(),
                      fmt_opt(s.iou, "n/a").c_str(), fmt_opt(s.dice, "n/a").c_str(),
                      static_cast<long long>(s.pixels));
        out += buf;
    }
    std::snprintf(buf, sizeof(buf), "%-*s %10s %10s\n", static_cast<int>(w), "defect mIoU / mean F1",
                  fmt_opt(defect_miou, "n/a").c_str(), fmt_opt(mean_f1, "n/a").c_str());
    out += buf;
    std::snprintf(buf, sizeof(buf), "%-*s %10.6f\n", static_cast<int>(w), "pixel accuracy", pixel_accuracy);
    out += buf;
    return out;
}

LabelMap argmax_classes(const TensorPtrT<float>& logits) {
    if (logits->rank() != 4) throw std::invalid_argument("argmax_classes: logits must be [N,C,H,W]");
    const int N = logits->dim(0), C = logits->dim(1), H = logits->dim(2), W = logits->dim(3);
    LabelMap out(N, H, W);
    const std::int64_t hw = static_cast<std::int64_t>(H) * W;
    for (int n = 0; n < N; ++n)
        for (std::int64_t p = 0; p < hw; ++p) {
            const float* base = logits->data.data() + static_cast<std::int64_t>(n) * C * hw + p;
            int best = 0;
            float bv = base[0];
            for (int c = 1; c < C; ++c) {
                const float v = base[static_cast<std::int64_t>(c) * hw];
                if (v > bv) {
                    bv = v;
                    best = c;
                }
            }
            out.v[static_cast<std::size_t>(n * hw + p)] = best;
        }
    return out;
}

}  // namespace deltaseg
