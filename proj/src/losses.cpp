#include "fino/losses.hpp"

#include <cmath>
#include <string>

#include "fino/ops.hpp"

namespace fino::losses {

void LossWeights::validate() const {
  if (!std::isfinite(lambda) || lambda < 0.0) throw PreconditionError("lambda must be finite and non-negative");
}

namespace {

double checked_component(const Tensor& t, const char* name) {
  if (!t.defined() || t.numel() != 1) throw PreconditionError(std::string("loss component ") + name + " is not a scalar");
  const double v = t.item();
  if (!std::isfinite(v)) throw NumericError(std::string("loss component ") + name + " is not finite");
  return v;
}

}  // namespace

TotalLoss total_loss(const Tensor& l_cd, const Tensor& l_sal, const Tensor& l_gcl, const Tensor& l_rcl,
                     const LossWeights& weights) {
  weights.validate();
  TotalLoss out;
  out.l_cd = checked_component(l_cd, "l_cd");
  out.l_sal = checked_component(l_sal, "l_sal");
  out.l_gcl = checked_component(l_gcl, "l_gcl");
  out.l_rcl = checked_component(l_rcl, "l_rcl");
  out.total = ops::add(l_cd, l_sal);
  if (weights.lambda > 0.0) {
    out.total = ops::add(out.total, ops::scale(ops::add(l_gcl, l_rcl), weights.lambda));
  }
  out.value = out.total.item();
  return out;
}

}  // namespace fino::losses
