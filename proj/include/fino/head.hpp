#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>

#include "fino/backbone.hpp"
#include "fino/param_store.hpp"
#include "fino/tensor.hpp"

// Regularization gate, change characteristics learning and the segmentation
// head with its threshold decision.
namespace fino::head {

struct GateOptions {
  /// Add the (detached) shape mask to the sigmoid gate.
  bool use_shape_mask = true;
  /// Clamp the gate to [0,1] after the mask is added.
  bool clamp = false;
};

struct GateOutput {
  Tensor gate;     // G_i [B,1,H_i,W_i]
  Tensor gated_a;  // I_{a,i}
  Tensor gated_b;  // I_{b,i}
};

struct ChangeFeature {
  Tensor change;           // Z_i
  Tensor distance;         // d_i >= 0
  Tensor channel_weights;  // sigmoid(MLP(maxpool(d) + avgpool(d))), [B,C_i,1,1]
};

struct HeadOutput {
  Tensor logits;  // [B,1,H,W] after upsampling
  Tensor prob;    // sigmoid(logits)
};

inline constexpr std::size_t kChannelReduction = 4;
inline constexpr double kDefaultThreshold = 0.5;

/// Registers `rega.stage{i}.gate.*`, `ccl.stage{i}.proj`, `ccl.stage{i}.mlp.*`
/// and `head.conv{0..3}.*`.
void init_params(ParamStore& params, const std::array<std::size_t, backbone::kStages>& widths, std::uint64_t seed);

/// G_i = sigmoid(conv1x1(cat(x_a, x_b, H_i))) + M_i, I_t = x_t * G_i.
/// The mask enters without gradient; its supervision comes only from the
/// shape loss.
GateOutput rega_gate(std::size_t stage, const Tensor& x_a, const Tensor& x_b, const Tensor& shape_features,
                     const std::optional<Tensor>& shape_mask, const ParamStore& params, const GateOptions& options = {});

/// d_i = |proj(I_a) - proj(I_b)| with a shared bias-free 1x1 projection;
/// Z_i = d_i scaled per channel by sigmoid(MLP(maxpool(d_i) + avgpool(d_i))).
ChangeFeature ccl(std::size_t stage, const Tensor& gated_a, const Tensor& gated_b, const ParamStore& params);

/// 1x1 conv, then three 3x3 convs (ReLU between, none after the last), then
/// bilinear upsampling of the logits to height x width and a sigmoid.
HeadOutput seg_head(const Tensor& z1, const ParamStore& params, std::size_t height, std::size_t width);

/// 1 where prob > threshold, else 0. Threshold must lie in (0,1).
Tensor decide(const Tensor& prob, double threshold = kDefaultThreshold);

}  // namespace fino::head
