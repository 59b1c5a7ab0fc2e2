#include "deltaseg/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace deltaseg {

double cosine_lr(long long step, long long total_steps, double lr0, double eta_min) {
    if (total_steps <= 0) throw std::invalid_argument("cosine_lr: total_steps must be positive");
    if (step < 0 || step > total_steps) throw std::invalid_argument("cosine_lr: step outside [0, total_steps]");
    return eta_min + 0.5 * (lr0 - eta_min) * (1.0 + std::cos(3.14159265358979323846 * step / total_steps));
}

AdamW::AdamW(const ParamListT<float>& params, AdamWConfig cfg) : cfg_(cfg) {
    for (const auto& p : params)
        if (p.trainable) params_.push_back(p);
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
        m_[i].assign(params_[i].tensor->data.size(), 0.0f);
        v_[i].assign(params_[i].tensor->data.size(), 0.0f);
    }
}

void AdamW::zero_grad() {
    for (auto& p : params_) {
        p.tensor->ensure_grad();
        p.tensor->zero_grad();
    }
}

void AdamW::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const float decay = static_cast<float>(1.0 - lr * cfg_.weight_decay);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& t = *params_[i].tensor;
        if (t.grad.size() != t.data.size())
            throw std::runtime_error("adamw_step: parameter '" + params_[i].path + "' has no gradient");
        float* th = t.data.data();
        const float* g = t.grad.data();
        float* m = m_[i].data();
        float* v = v_[i].data();
        const std::size_t n = t.data.size();
        for (std::size_t k = 0; k < n; ++k) {
            if (!std::isfinite(g[k]))
                throw std::runtime_error("adamw_step: non-finite gradient in parameter '" + params_[i].path + "'");
            th[k] *= decay;  // decoupled decay precedes the adaptive update
            m[k] = static_cast<float>(cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k]);
            v[k] = static_cast<float>(cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * static_cast<double>(g[k]) * g[k]);
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            th[k] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + cfg_.eps));
        }
    }
}

}  // namespace deltaseg
