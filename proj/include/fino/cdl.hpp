#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>

#include "fino/backbone.hpp"
#include "fino/param_store.hpp"
#include "fino/tensor.hpp"

// Context-dependent learning: cascaded region attention where the change
// features of the next-coarser stage guide the current stage.
namespace fino::cdl {

struct RegionAttnConfig {
  /// Region side in pixels. Stages smaller than the region use their full
  /// extent as a single region.
  std::size_t region = 4;
  /// When false the attention map is dropped and T_i = phi2(C_i).
  bool enabled = true;
};

struct ContextFeature {
  Tensor context;    // T_i [B,C_i,H_i,W_i]
  Tensor attention;  // A_i [B,1,H_i,W_i]; undefined when attention is disabled
  Tensor scores;     // phi1 output before scaling and softmax
};

/// Region side used on an H x W map: min(region, H, W).
std::size_t effective_region(std::size_t region, std::size_t height, std::size_t width);

/// Softmax of scores [B,1,H,W] / sqrt(dk) inside each non-overlapping
/// region x region block. Throws when the region does not tile the map.
Tensor region_softmax(const Tensor& scores, std::size_t region, double dk);

/// Registers `cdl.stage{i}.phi1.*` (1x1 conv to a single score channel over the
/// concatenation of C_i and the guide) and `cdl.stage{i}.phi2.*` (1x1 conv
/// C_i -> C_i). The top stage is guided by itself.
void init_params(ParamStore& params, const std::array<std::size_t, backbone::kStages>& widths, std::uint64_t seed);

/// `stage` is 1-based. `guide` is Z_{i+1}; it is bilinearly resized to C_i's
/// extents. Without a guide C_i is concatenated with itself.
ContextFeature cdl_forward(std::size_t stage, const Tensor& diff, const std::optional<Tensor>& guide,
                           const ParamStore& params, const RegionAttnConfig& config);

/// Enforces the top-down order 4, 3, 2, 1 of the cascade.
class CascadeRunner {
 public:
  CascadeRunner(const ParamStore& params, RegionAttnConfig config) : params_(params), config_(config) {}

  /// Runs the stage after checking it is the next one due. Throws
  /// PreconditionError on an out-of-order call.
  ContextFeature advance(std::size_t stage, const Tensor& diff, const std::optional<Tensor>& guide);
  /// Marks a stage as skipped (ablation) while keeping the order contract.
  void skip(std::size_t stage);
  std::size_t next_stage() const { return next_; }

 private:
  void expect(std::size_t stage);

  const ParamStore& params_;
  RegionAttnConfig config_;
  std::size_t next_ = backbone::kStages;
};

/// Receives the 1-based stage and its context (absent on skipped stages) and
/// returns that stage's change feature Z_i, which guides the stage below.
using ChangeProducer = std::function<Tensor(std::size_t stage, const std::optional<ContextFeature>& context)>;

/// Top-down cascade. Stage i (i < 4) is guided by the Z_{i+1} that `produce`
/// returned for the stage above. `enabled[i-1]` selects the stages that run
/// attention. Returns T_1..T_4 (absent where skipped).
std::array<std::optional<ContextFeature>, backbone::kStages> cascade(
    const std::array<Tensor, backbone::kStages>& diffs, const std::array<bool, backbone::kStages>& enabled,
    const ChangeProducer& produce, const ParamStore& params, const RegionAttnConfig& config);

}  // namespace fino::cdl
