#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "fino/backbone.hpp"
#include "fino/bsa.hpp"
#include "fino/cdl.hpp"
#include "fino/head.hpp"
#include "fino/param_store.hpp"

// The full change-detection graph: Siamese backbone, top-down CDL cascade,
// shape branch, regularization gate, CCL and segmentation head.
namespace fino::model {

struct ModelConfig {
  backbone::BackboneConfig backbone;
  cdl::RegionAttnConfig attention;
  head::GateOptions gate;
  /// Brightness losses and the shape branch.
  bool use_bsa = true;
  /// Regularization gate. When off, CCL sees the raw stage features.
  bool use_rega = true;
  /// Stages (index i-1 for stage i) that run the CDL/BSA/REGA chain. A skipped
  /// stage reuses the gate of the stage above, upsampled.
  std::array<bool, backbone::kStages> stages{true, true, true, true};
  bsa::RclPolarity polarity = bsa::RclPolarity::AlignUnchanged;

  void validate() const;
};

struct StageState {
  Tensor diff;                                 // C_i
  std::optional<cdl::ContextFeature> context;  // T_i, A_i
  std::optional<bsa::ShapeBranchOutput> shape; // H_i, M_i
  std::optional<Tensor> gate;                  // G_i
  Tensor gated_a, gated_b;                     // I_{t,i}
  head::ChangeFeature change;                  // d_i, Z_i
};

struct ForwardResult {
  backbone::FeaturePyramid features_a, features_b;
  std::array<StageState, backbone::kStages> stages;
  head::HeadOutput output;
};

void init_params(ParamStore& params, const ModelConfig& config, std::uint64_t seed);

/// Replacement values for the detached shape masks that enter the gates.
/// Gradient checking pins them at their nominal values so finite differences
/// see the same function the stop-gradient graph differentiates.
struct ForwardOverrides {
  std::array<std::optional<Tensor>, backbone::kStages> gate_masks;
};

/// Images are [B,3,H,W] with H, W divisible by 32.
ForwardResult forward(const Tensor& image_a, const Tensor& image_b, const ParamStore& params,
                      const ModelConfig& config, const ForwardOverrides* overrides = nullptr);

struct LossTerms {
  Tensor l_cd, l_sal, l_gcl, l_rcl;
};

/// Component losses for a batch. With lambda == 0 (or BSA off) the brightness
/// terms are not built and come back as constant zeros.
LossTerms component_losses(const ForwardResult& result, const Tensor& gt_mask, double lambda,
                           const ModelConfig& config);

}  // namespace fino::model
