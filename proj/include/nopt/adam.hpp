#pragma once

#include <cmath>
#include <vector>

#include "nopt/tape.hpp"

namespace nopt {

/// Adam with bias correction. Gradients are zeroed after each step.
template <typename T>
class Adam {
public:
    explicit Adam(std::vector<Parameter<T>*> params, double lr = 1e-3,
                  double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2),
          eps_(eps) {}

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(b1_, double(t_));
        const double bc2 = 1.0 - std::pow(b2_, double(t_));
        for (Parameter<T>* p : params_) {
            if (p->frozen) {
                p->zero_grad();
                continue;
            }
            for (std::size_t i = 0; i < p->value.size(); ++i) {
                const double g = double(p->grad[i]);
                double m = b1_ * double(p->adam_m[i]) + (1.0 - b1_) * g;
                double v = b2_ * double(p->adam_v[i]) + (1.0 - b2_) * g * g;
                p->adam_m[i] = T(m);
                p->adam_v[i] = T(v);
                p->value[i] -= T(lr_ * (m / bc1) /
                                 (std::sqrt(v / bc2) + eps_));
            }
            p->zero_grad();
        }
    }

    long step_count() const { return t_; }
    double learning_rate() const { return lr_; }

private:
    std::vector<Parameter<T>*> params_;
    double lr_, b1_, b2_, eps_;
    long t_ = 0;
};

}  // namespace nopt
