#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

#include "fino/param_store.hpp"
#include "fino/tensor.hpp"

namespace fino::backbone {

inline constexpr std::size_t kStages = 4;

enum class NormKind { None, Group };

struct BackboneConfig {
  std::size_t in_channels = 3;
  /// Stride of the stem convolution; a max pool makes up the rest of the /4.
  std::size_t stem_stride = 2;
  std::array<std::size_t, kStages> blocks{1, 1, 1, 1};
  std::array<std::size_t, kStages> widths{32, 64, 128, 256};
  NormKind norm = NormKind::None;
  std::size_t norm_groups = 4;

  void validate() const;
};

/// Per-image features at 1/4, 1/8, 1/16 and 1/32 of the input extents.
struct FeaturePyramid {
  std::array<Tensor, kStages> stages;
};

/// Registers `backbone.stem.*` and `backbone.stage{i}.block{j}.*` entries.
/// Convolutions are Kaiming-uniform, biases fan-in uniform, residual scales one.
void init_params(ParamStore& params, const BackboneConfig& config, std::uint64_t seed);

/// Residual mini-encoder. Both images of a pair go through the same entries of
/// `params`, which is all the Siamese weight sharing there is.
FeaturePyramid encode(const Tensor& image, const ParamStore& params, const BackboneConfig& config);

/// |a - b| element-wise.
Tensor diff(const Tensor& stage_a, const Tensor& stage_b);

}  // namespace fino::backbone
