#pragma once

#include <cmath>
#include <vector>

#include "mdfsc/tensor.hpp"

namespace mdfsc {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam update, in place. Gradients are zeroed afterwards.
template <typename T>
void adam_step(const std::vector<ParamTensorT<T>*>& params,
               const AdamConfig& cfg) {
  for (ParamTensorT<T>* p : params) {
    p->step_count += 1;
    const double t = static_cast<double>(p->step_count);
    const double corr1 = 1.0 - std::pow(cfg.beta1, t);
    const double corr2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad.data[i];
      const double m = cfg.beta1 * p->adam_m.data[i] + (1.0 - cfg.beta1) * g;
      const double v = cfg.beta2 * p->adam_v.data[i] + (1.0 - cfg.beta2) * g * g;
      p->adam_m.data[i] = static_cast<T>(m);
      p->adam_v.data[i] = static_cast<T>(v);
      const double mh = m / corr1;
      const double vh = v / corr2;
      p->value.data[i] -=
          static_cast<T>(cfg.lr * mh / (std::sqrt(vh) + cfg.eps));
    }
    p->zero_grad();
  }
}

}  // namespace mdfsc
