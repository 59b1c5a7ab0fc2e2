#pragma once

#include <cstdint>
#include <vector>

#include "deltaseg/layers.hpp"

namespace deltaseg {

// lr = eta_min + 0.5 (lr0 - eta_min) (1 + cos(pi step/total))
double cosine_lr(long long step, long long total_steps, double lr0, double eta_min);

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// AdamW with decoupled decay applied before the adaptive update. A NaN or Inf
// gradient aborts the step naming the parameter path.
class AdamW {
  public:
    AdamW(const ParamListT<float>& params, AdamWConfig cfg);

    void step(double lr);
    void zero_grad();
    long long steps() const { return t_; }

  private:
    AdamWConfig cfg_;
    long long t_ = 0;
    std::vector<ParamRefT<float>> params_;  // trainable entries only
    std::vector<std::vector<float>> m_, v_;
};

}  // namespace deltaseg
