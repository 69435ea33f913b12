#include "fino/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "fino/ops.hpp"

namespace fino {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<NamedTensor> params,
                           const GradCheckOptions& options) {
  for (auto& p : params) {
    if (!p.tensor.requires_grad()) throw PreconditionError("grad_check: " + p.name + " does not require grad");
    p.tensor.zero_grad();
  }
  auto traced = [&f](std::uint64_t& digest) {
    ops::BranchTrace trace;
    const double v = f().item();
    digest = trace.digest();
    return v;
  };
  std::uint64_t nominal_digest = 0;
  Tensor loss;
  {
    ops::BranchTrace trace;
    loss = f();
    nominal_digest = trace.digest();
  }
  const double reference = loss.item();
  if (f().item() != reference) throw NumericError("grad_check: program is not deterministic");
  loss.backward();

  GradCheckReport report;
  for (auto& p : params) {
    GradCheckEntry entry;
    entry.name = p.name;
    const auto analytic = p.tensor.grad();
    auto values = p.tensor.mutable_values();
    const std::size_t n = values.size();
    const std::size_t count = options.max_entries == 0 ? n : std::min(n, options.max_entries);
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t idx = count == n ? k : k * n / count;
      const double saved = values[idx];
      std::uint64_t plus_digest = 0, minus_digest = 0;
      values[idx] = saved + options.step;
      const double plus = traced(plus_digest);
      values[idx] = saved - options.step;
      const double minus = traced(minus_digest);
      values[idx] = saved;
      if (plus_digest != nominal_digest || minus_digest != nominal_digest) ++entry.kink_probes;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double err = relative_error(analytic[idx], numeric);
      ++entry.probed;
      if (err > entry.max_rel_error || k == 0) {
        entry.max_rel_error = err;
        entry.worst_index = idx;
        entry.worst_analytic = analytic[idx];
        entry.worst_numeric = numeric;
      }
    }
    entry.passed = entry.max_rel_error < options.tolerance;
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.passed = report.passed && entry.passed;
    report.kink_probes += entry.kink_probes;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

GradCheckReport grad_check(const std::function<Tensor()>& f, ParamStore& params, const GradCheckOptions& options) {
  std::vector<NamedTensor> named;
  for (auto& [name, t] : params) named.push_back({name, t});
  return grad_check(f, std::move(named), options);
}

}  // namespace fino
