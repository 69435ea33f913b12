#include "fino/optim.hpp"

#include <cmath>

namespace fino::train {

double poly_lr(std::uint64_t step, std::uint64_t total_steps, double base_lr, double power) {
  if (total_steps == 0) throw PreconditionError("poly_lr: total_steps must be positive");
  if (step > total_steps) {
    throw PreconditionError("poly_lr: step " + std::to_string(step) + " exceeds total " + std::to_string(total_steps));
  }
  if (!(base_lr > 0.0) || !(power > 0.0)) throw PreconditionError("poly_lr: base_lr and power must be positive");
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * std::pow(1.0 - frac, power);
}

void adamw_step(std::span<double> param, std::span<const double> grad, Moments& moments, double lr,
                std::uint64_t step, const AdamWOptions& o) {
  if (grad.size() != param.size()) throw PreconditionError("adamw_step: gradient size mismatch");
  if (step == 0) throw PreconditionError("adamw_step: step count is 1-based");
  if (moments.m.size() != param.size()) moments.m.assign(param.size(), 0.0);
  if (moments.v.size() != param.size()) moments.v.assign(param.size(), 0.0);
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(step));
  const double decay = 1.0 - lr * o.weight_decay;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    moments.m[i] = o.beta1 * moments.m[i] + (1.0 - o.beta1) * g;
    moments.v[i] = o.beta2 * moments.v[i] + (1.0 - o.beta2) * g * g;
    const double m_hat = moments.m[i] / bc1;
    const double v_hat = moments.v[i] / bc2;
    param[i] = param[i] * decay - lr * m_hat / (std::sqrt(v_hat) + o.eps);
  }
}

bool AdamW::step(ParamStore& params, double lr) {
  std::map<std::string, std::vector<double>> grads;
  for (auto& [name, t] : params) {
    auto g = t.grad();
    for (double v : g) {
      if (!std::isfinite(v)) {
        ++skipped_;
        return false;
      }
    }
    grads.emplace(name, std::move(g));
  }
  ++steps_;
  for (auto& [name, t] : params) adamw_step(t.mutable_values(), grads[name], moments_[name], lr, steps_, options_);
  return true;
}

void AdamW::restore(std::map<std::string, Moments> moments, std::uint64_t steps) {
  moments_ = std::move(moments);
  steps_ = steps;
}

}  // namespace fino::train
