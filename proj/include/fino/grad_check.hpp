#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "fino/param_store.hpp"
#include "fino/tensor.hpp"

namespace fino {

struct GradCheckOptions {
  double step = 1e-4;
  double tolerance = 1e-3;
  /// Per-tensor cap on probed entries (0 = probe everything). Entries are
  /// spread evenly over the flat index range.
  std::size_t max_entries = 0;
};

struct GradCheckEntry {
  std::string name;
  std::size_t probed = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  /// Probes whose +/- step evaluations took a different branch of some
  /// piecewise op than the unperturbed evaluation.
  std::size_t kink_probes = 0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  std::size_t kink_probes = 0;
  bool passed = true;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
double relative_error(double analytic, double numeric);

/// Compares reverse-mode gradients of the scalar program `f` against central
/// finite differences. Throws NumericError when two identical forward passes
/// disagree.
GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<NamedTensor> params,
                           const GradCheckOptions& options = {});
GradCheckReport grad_check(const std::function<Tensor()>& f, ParamStore& params, const GradCheckOptions& options = {});

}  // namespace fino
