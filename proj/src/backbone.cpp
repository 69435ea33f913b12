#include "fino/backbone.hpp"

#include <string>

#include "fino/ops.hpp"

namespace fino::backbone {

namespace {

std::string block_prefix(std::size_t stage, std::size_t block) {
  return "backbone.stage" + std::to_string(stage + 1) + ".block" + std::to_string(block + 1) + ".";
}

void add_conv(ParamStore& params, const std::string& name, std::size_t cout, std::size_t cin, std::size_t k,
              std::uint64_t seed, bool bias = true) {
  params.add(name + ".weight", kaiming_uniform(name + ".weight", {cout, cin, k, k}, cin * k * k, seed));
  if (bias) params.add(name + ".bias", bias_uniform(name + ".bias", cout, cin * k * k, seed));
}

Tensor conv(const Tensor& x, const ParamStore& params, const std::string& name, std::size_t stride = 1) {
  const auto& w = params.get(name + ".weight");
  auto y = ops::conv2d(x, w, stride, ops::same_padding(w));
  if (params.contains(name + ".bias")) y = ops::add_channel_bias(y, params.get(name + ".bias"));
  return y;
}

Tensor pre_activation(const Tensor& x, const ParamStore& params, const std::string& norm_name,
                      const BackboneConfig& config) {
  if (config.norm == NormKind::Group) {
    return ops::relu(ops::group_norm(x, config.norm_groups, params.get(norm_name + ".gamma"),
                                     params.get(norm_name + ".beta")));
  }
  return ops::relu(x);
}

}  // namespace

void BackboneConfig::validate() const {
  if (in_channels == 0) throw PreconditionError("backbone: in_channels must be positive");
  if (stem_stride != 1 && stem_stride != 2 && stem_stride != 4) {
    throw PreconditionError("backbone: stem_stride must be 1, 2 or 4");
  }
  for (std::size_t i = 0; i < kStages; ++i) {
    if (blocks[i] == 0) throw PreconditionError("backbone: every stage needs at least one block");
    if (widths[i] == 0 || (i > 0 && widths[i] <= widths[i - 1])) {
      throw PreconditionError("backbone: channel widths must be positive and strictly increasing");
    }
    if (norm == NormKind::Group && (norm_groups == 0 || widths[i] % norm_groups != 0)) {
      throw PreconditionError("backbone: norm_groups must divide every stage width");
    }
  }
}

void init_params(ParamStore& params, const BackboneConfig& config, std::uint64_t seed) {
  config.validate();
  add_conv(params, "backbone.stem", config.widths[0], config.in_channels, 3, seed);
  std::size_t cin = config.widths[0];
  for (std::size_t s = 0; s < kStages; ++s) {
    const std::size_t cout = config.widths[s];
    for (std::size_t b = 0; b < config.blocks[s]; ++b) {
      const auto prefix = block_prefix(s, b);
      const bool entry = b == 0 && (s > 0 || cin != cout);
      // conv1 feeds norm2, which cancels any per-channel bias.
      add_conv(params, prefix + "conv1", cout, cin, 3, seed, config.norm != NormKind::Group);
      add_conv(params, prefix + "conv2", cout, cout, 3, seed);
      params.add(prefix + "scale", Tensor::full({cout}, 1.0, true));
      if (entry) add_conv(params, prefix + "proj", cout, cin, 1, seed, false);
      if (config.norm == NormKind::Group) {
        params.add(prefix + "norm1.gamma", Tensor::full({cin}, 1.0, true));
        params.add(prefix + "norm1.beta", Tensor::zeros({cin}, true));
        params.add(prefix + "norm2.gamma", Tensor::full({cout}, 1.0, true));
        params.add(prefix + "norm2.beta", Tensor::zeros({cout}, true));
      }
      cin = cout;
    }
  }
}

FeaturePyramid encode(const Tensor& image, const ParamStore& params, const BackboneConfig& config) {
  config.validate();
  const auto& s = image.shape();
  if (s.size() != 4 || s[1] != config.in_channels) {
    throw PreconditionError("encode: expected [B," + std::to_string(config.in_channels) + ",H,W], got " +
                            shape_str(s));
  }
  if (s[2] % 32 != 0 || s[3] % 32 != 0) {
    throw PreconditionError("encode: input extents " + shape_str(s) + " must be divisible by 32");
  }

  auto x = conv(image, params, "backbone.stem", config.stem_stride);
  const std::size_t pool = 4 / config.stem_stride;
  if (pool > 1) x = ops::max_pool2d(x, pool, pool);

  FeaturePyramid out;
  for (std::size_t st = 0; st < kStages; ++st) {
    for (std::size_t b = 0; b < config.blocks[st]; ++b) {
      const auto prefix = block_prefix(st, b);
      const std::size_t stride = (b == 0 && st > 0) ? 2 : 1;
      auto h = pre_activation(x, params, prefix + "norm1", config);
      h = conv(h, params, prefix + "conv1", stride);
      h = pre_activation(h, params, prefix + "norm2", config);
      h = conv(h, params, prefix + "conv2");
      h = ops::scale_channels(h, params.get(prefix + "scale"));
      const auto skip = params.contains(prefix + "proj.weight")
                            ? ops::conv2d(x, params.get(prefix + "proj.weight"), stride)
                            : x;
      x = ops::add(skip, h);
    }
    out.stages[st] = x;
  }
  return out;
}

Tensor diff(const Tensor& stage_a, const Tensor& stage_b) { return ops::abs(ops::sub(stage_a, stage_b)); }

}  // namespace fino::backbone
