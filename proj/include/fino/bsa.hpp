#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>

#include "fino/backbone.hpp"
#include "fino/param_store.hpp"
#include "fino/tensor.hpp"

// Brightness-aware contrastive losses on the last backbone stage and the
// shape-aware asymmetric convolution branch with its mask supervision.
namespace fino::bsa {

/// Kernel shapes of the asymmetric branch, as (kh, kw).
inline constexpr std::array<std::array<std::size_t, 2>, 7> kAsymKernels{
    {{1, 1}, {1, 3}, {3, 1}, {3, 3}, {1, 5}, {5, 1}, {5, 5}}};

/// Probability clamp shared by every BCE in this module.
inline constexpr double kProbEps = 1e-6;

enum class RclPolarity {
  /// Target 1 - y: unchanged positions are pulled together.
  AlignUnchanged,
  /// Target y, as the formula is printed.
  Literal,
};

struct ShapeBranchOutput {
  Tensor shape_features;  // H_i
  Tensor mask;            // M_i in (0,1), [B,1,H_i,W_i]
};

struct BsaLossBundle {
  double l_gcl = 0.0;
  double l_rcl = 0.0;
  double l_sal = 0.0;
};

/// 1 - cos(GAP(a), GAP(b)), averaged over the batch.
Tensor global_brightness_loss(const Tensor& x4_a, const Tensor& x4_b);

/// Max-pools a binary [B,1,H,W] mask down to height x width (integer factor).
Tensor downsample_mask(const Tensor& mask, std::size_t height, std::size_t width);

/// Throws PreconditionError if any value is not exactly 0 or 1.
void require_binary(const Tensor& mask, const char* what);

/// BCE between per-position cosine similarity (remapped to [0,1] and clamped)
/// and a target built from the stage-resolution mask.
Tensor region_align_loss(const Tensor& x4_a, const Tensor& x4_b, const Tensor& mask,
                         RclPolarity polarity = RclPolarity::AlignUnchanged);

/// Registers `bsa.stage{i}.asym.k{h}x{w}.weight`, `bsa.stage{i}.asym.bias` and
/// the two-layer mask MLP `bsa.stage{i}.mlp.fc{1,2}.*`.
void init_params(ParamStore& params, const std::array<std::size_t, backbone::kStages>& widths, std::uint64_t seed);

/// H_i = relu(sum of the seven same-padded convolutions + bias);
/// M_i = sigmoid(fc2(relu(fc1(H_i)))).
ShapeBranchOutput shape_branch(std::size_t stage, const Tensor& context, const ParamStore& params);

/// Sum over the given stage masks of the mean per-pixel BCE against the GT
/// max-pooled to each mask's extents. Absent stages contribute nothing.
Tensor shape_supervision_loss(std::span<const std::optional<Tensor>> masks, const Tensor& gt);

}  // namespace fino::bsa
