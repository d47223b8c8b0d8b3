#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "ulmv/tape.hpp"

namespace ulmv {

template <std::floating_point S>
struct AdamWConfig {
  S beta1 = S(0.9);
  S beta2 = S(0.999);
  S eps = S(1e-8);
  S weight_decay = S(0.01);
};

// AdamW with decoupled weight decay and bias-corrected moments. A step with
// any non-finite gradient is rejected before touching parameters or state.
template <std::floating_point S>
class AdamW {
 public:
  AdamW(std::vector<Parameter<S>*> params, AdamWConfig<S> cfg = {})
      : params_(std::move(params)), cfg_(cfg) {
    for (const Parameter<S>* p : params_) {
      m_.emplace_back(p->value.shape);
      v_.emplace_back(p->value.shape);
    }
  }

  // lr_of(i) supplies the learning rate for parameter i (per-group rates).
  void step(const std::function<S(size_t)>& lr_of) {
    for (const Parameter<S>* p : params_)
      if (!all_finite(p->grad))
        throw NumericFault("adamw_step: non-finite gradient in " + p->name + ", step rejected");
    ++t_;
    const S bc1 = S(1) - std::pow(cfg_.beta1, static_cast<S>(t_));
    const S bc2 = S(1) - std::pow(cfg_.beta2, static_cast<S>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      Parameter<S>& p = *params_[i];
      const S lr = lr_of(i);
      Tensor<S>& m = m_[i];
      Tensor<S>& v = v_[i];
      for (int64_t j = 0; j < p.value.numel(); ++j) {
        const S g = p.grad[j];
        m[j] = cfg_.beta1 * m[j] + (S(1) - cfg_.beta1) * g;
        v[j] = cfg_.beta2 * v[j] + (S(1) - cfg_.beta2) * g * g;
        const S mhat = m[j] / bc1;
        const S vhat = v[j] / bc2;
        p.value[j] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * p.value[j]);
      }
    }
  }

  void step(S lr) {
    step([lr](size_t) { return lr; });
  }

  int64_t step_count() const { return t_; }
  const std::vector<Parameter<S>*>& params() const { return params_; }
  Tensor<S>& moment1(size_t i) { return m_[i]; }
  Tensor<S>& moment2(size_t i) { return v_[i]; }
  void set_step_count(int64_t t) { t_ = t; }
  const AdamWConfig<S>& config() const { return cfg_; }

 private:
  std::vector<Parameter<S>*> params_;
  std::vector<Tensor<S>> m_, v_;
  int64_t t_ = 0;
  AdamWConfig<S> cfg_;
};

struct OneCycleShape {
  double warmup_frac = 0.3;
  double div_initial = 25.0;
  double div_final = 1e4;

  void validate() const {
    if (!(warmup_frac > 0.0 && warmup_frac < 1.0))
      throw ConfigError("one_cycle: warmup fraction must be in (0,1)");
    if (!(div_initial > 1.0 && div_final > 1.0))
      throw ConfigError("one_cycle: divisors must be > 1");
  }
};

// Cosine ramp max/div_initial -> max over the warmup fraction, cosine anneal
// down to max/div_final afterwards.
inline double one_cycle_lr(int64_t step, double max_lr, int64_t total_steps,
                           const OneCycleShape& shape = {}) {
  shape.validate();
  if (total_steps < 1) throw ConfigError("one_cycle: total_steps must be >= 1");
  if (step < 0 || step > total_steps)
    throw ConfigError("one_cycle: step " + std::to_string(step) + " outside [0," +
                      std::to_string(total_steps) + "]");
  const double warm = shape.warmup_frac * static_cast<double>(total_steps);
  const double initial = max_lr / shape.div_initial;
  const double final_lr = max_lr / shape.div_final;
  const double s = static_cast<double>(step);
  if (s <= warm) {
    const double phase = warm > 0 ? s / warm : 1.0;
    return initial + (max_lr - initial) * 0.5 * (1.0 - std::cos(M_PI * phase));
  }
  const double phase = (s - warm) / (static_cast<double>(total_steps) - warm);
  return final_lr + (max_lr - final_lr) * 0.5 * (1.0 + std::cos(M_PI * phase));
}

}  // namespace ulmv
