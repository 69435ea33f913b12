#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fino/grad_check.hpp"

// Registered gradient checks: every differentiable op on small random shapes,
// each module in isolation, and the full graph with its combined loss.
namespace fino::gradsuite {

struct SuiteOptions {
  /// Random instances per op.
  std::size_t seeds = 5;
  std::uint64_t base_seed = 7;
  GradCheckOptions check{};
  /// Per-tensor probe cap for the module and full-graph checks.
  std::size_t module_max_entries = 32;
  /// Square input side of the full-graph check.
  std::size_t full_size = 32;
  /// Random inputs tried per module before giving up on finding one where no
  /// probe straddles a kink of a piecewise op.
  std::size_t smooth_attempts = 32;
};

struct CaseResult {
  std::string module;
  std::string name;
  GradCheckReport report;
};

/// "ops", "backbone", "cdl", "bsa", "head", "full".
const std::vector<std::string>& modules();

/// Throws PreconditionError for an unknown module name.
std::vector<CaseResult> run(const std::string& module, const SuiteOptions& options = {});

}  // namespace fino::gradsuite
