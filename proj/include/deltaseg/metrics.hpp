#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "deltaseg/tensor.hpp"

namespace deltaseg {

// C x C pixel tallies, rows = ground truth, cols = prediction. Class 0 is
// background by convention. Accumulators merge associatively so evaluation
// can be sharded.
class ConfusionAccumulator {
  public:
    explicit ConfusionAccumulator(int num_classes);

    int num_classes() const { return c_; }
    std::int64_t count(int truth, int pred) const { return m_[static_cast<std::size_t>(truth) * c_ + pred]; }
    std::int64_t total() const;

    void add(const LabelMap& pred, const LabelMap& target);
    void merge(const ConfusionAccumulator& other);

  private:
    int c_;
    std::vector<std::int64_t> m_;
};

struct ClassScore {
    std::string name;
    std::optional<double> iou;   // absent when the class appears in neither pred nor target
    std::optional<double> dice;
    std::int64_t pixels = 0;     // ground-truth pixel count
};

struct MetricsReport {
    std::vector<ClassScore> per_class;
    std::optional<double> defect_miou;  // classes 1..C-1, absent classes excluded
    std::optional<double> mean_f1;      // same class set; F1 == Dice
    double pixel_accuracy = 0.0;

    std::string to_csv() const;
    std::string to_pretty() const;
};

MetricsReport score(const ConfusionAccumulator& acc, const std::vector<std::string>& class_names = {});

// Adds one prediction/target pair and returns the running scores.
MetricsReport accumulate_and_score(ConfusionAccumulator& acc, const LabelMap& pred, const LabelMap& target,
                                   const std::vector<std::string>& class_names = {});

// argmax over the class axis of [N,C,H,W] logits
LabelMap argmax_classes(const TensorPtrT<float>& logits);

}  // namespace deltaseg
