#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fino/param_store.hpp"

namespace fino::train {

/// base_lr * (1 - step / total_steps)^power. Throws when step > total_steps.
double poly_lr(std::uint64_t step, std::uint64_t total_steps, double base_lr, double power);

struct AdamWOptions {
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct Moments {
  std::vector<double> m;
  std::vector<double> v;
};

/// One AdamW update of `param` in place with decoupled weight decay:
///   p <- p * (1 - lr * wd);  p <- p - lr * m_hat / (sqrt(v_hat) + eps)
/// `step` is the 1-based update count used for bias correction.
void adamw_step(std::span<double> param, std::span<const double> grad, Moments& moments, double lr,
                std::uint64_t step, const AdamWOptions& options);

/// AdamW over a whole ParamStore. Steps with any non-finite gradient are
/// skipped entirely and counted.
class AdamW {
 public:
  explicit AdamW(AdamWOptions options = {}) : options_(options) {}

  /// Returns false when the step was skipped.
  bool step(ParamStore& params, double lr);

  std::uint64_t steps() const { return steps_; }
  std::uint64_t skipped() const { return skipped_; }
  const AdamWOptions& options() const { return options_; }
  std::map<std::string, Moments>& moments() { return moments_; }
  const std::map<std::string, Moments>& moments() const { return moments_; }
  void restore(std::map<std::string, Moments> moments, std::uint64_t steps);

 private:
  AdamWOptions options_;
  std::map<std::string, Moments> moments_;
  std::uint64_t steps_ = 0;
  std::uint64_t skipped_ = 0;
};

}  // namespace fino::train
