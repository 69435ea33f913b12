#pragma once

#include "fino/tensor.hpp"

namespace fino::losses {

struct LossWeights {
  /// Shared weight of the global and region contrastive terms.
  double lambda = 0.1;

  void validate() const;
};

struct TotalLoss {
  Tensor total;
  double l_cd = 0.0;
  double l_sal = 0.0;
  double l_gcl = 0.0;
  double l_rcl = 0.0;
  double value = 0.0;
};

/// total = l_cd + l_sal + lambda * (l_gcl + l_rcl). Each component must be a
/// finite scalar; a non-finite one raises NumericError naming it.
TotalLoss total_loss(const Tensor& l_cd, const Tensor& l_sal, const Tensor& l_gcl, const Tensor& l_rcl,
                     const LossWeights& weights);

}  // namespace fino::losses
