#pragma once

#include <cmath>
#include <vector>

#include "medrov/detector.hpp"

namespace medrov {

/// Adam with decoupled weight decay.
class AdamW {
public:
    AdamW(std::vector<ModelParam*> params, double lr, double weight_decay,
          double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), weight_decay_(weight_decay), beta1_(beta1),
          beta2_(beta2), eps_(eps) {
        for (ModelParam* p : params_) {
            m_.emplace_back(p->value.shape);
            v_.emplace_back(p->value.shape);
        }
    }

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Tensor& w = params_[i]->value;
            const Tensor& g = params_[i]->grad;
            Tensor& m = m_[i];
            Tensor& v = v_[i];
            for (std::size_t k = 0; k < w.size(); ++k) {
                m.data[k] = beta1_ * m.data[k] + (1.0 - beta1_) * g.data[k];
                v.data[k] = beta2_ * v.data[k] + (1.0 - beta2_) * g.data[k] * g.data[k];
                const double m_hat = m.data[k] / bc1;
                const double v_hat = v.data[k] / bc2;
                w.data[k] -= lr_ * (m_hat / (std::sqrt(v_hat) + eps_) +
                                    weight_decay_ * w.data[k]);
            }
        }
    }

private:
    std::vector<ModelParam*> params_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    double lr_;
    double weight_decay_;
    double beta1_;
    double beta2_;
    double eps_;
    long t_ = 0;
};

}  // namespace medrov
