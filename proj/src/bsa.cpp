#include "fino/bsa.hpp"

#include <string>

#include "fino/ops.hpp"

namespace fino::bsa {

namespace {

std::string prefix(std::size_t stage) { return "bsa.stage" + std::to_string(stage) + "."; }

std::string kernel_name(std::size_t stage, const std::array<std::size_t, 2>& k) {
  return prefix(stage) + "asym.k" + std::to_string(k[0]) + "x" + std::to_string(k[1]) + ".weight";
}

Tensor conv1x1(const Tensor& x, const ParamStore& params, const std::string& name) {
  return ops::add_channel_bias(ops::conv2d(x, params.get(name + ".weight")), params.get(name + ".bias"));
}

}  // namespace

Tensor global_brightness_loss(const Tensor& x4_a, const Tensor& x4_b) {
  if (x4_a.shape() != x4_b.shape()) throw PreconditionError("global_brightness_loss: shape mismatch");
  const auto cos = ops::channel_cosine(ops::global_avg_pool(x4_a), ops::global_avg_pool(x4_b));
  return ops::add_scalar(ops::scale(ops::mean(cos), -1.0), 1.0);
}

void require_binary(const Tensor& mask, const char* what) {
  for (double v : mask.values()) {
    if (v != 0.0 && v != 1.0) throw PreconditionError(std::string(what) + ": mask is not binary");
  }
}

Tensor downsample_mask(const Tensor& mask, std::size_t height, std::size_t width) {
  const auto& s = mask.shape();
  if (s.size() != 4 || s[1] != 1) throw PreconditionError("downsample_mask: expected [B,1,H,W], got " + shape_str(s));
  if (s[2] == height && s[3] == width) return mask;
  if (height == 0 || s[2] % height != 0 || width == 0 || s[3] % width != 0 || s[2] / height != s[3] / width) {
    throw PreconditionError("downsample_mask: cannot pool " + shape_str(s) + " to " + std::to_string(height) + "x" +
                            std::to_string(width));
  }
  const std::size_t factor = s[2] / height;
  return ops::max_pool2d(mask.detach(), factor, factor);
}

Tensor region_align_loss(const Tensor& x4_a, const Tensor& x4_b, const Tensor& mask, RclPolarity polarity) {
  if (x4_a.shape() != x4_b.shape()) throw PreconditionError("region_align_loss: shape mismatch");
  const auto& s = x4_a.shape();
  if (mask.shape() != Shape{s[0], 1, s[2], s[3]}) {
    throw PreconditionError("region_align_loss: mask " + shape_str(mask.shape()) + " does not match stage extents " +
                            shape_str(s));
  }
  require_binary(mask, "region_align_loss");
  const auto cos = ops::channel_cosine(x4_a, x4_b);
  const auto sim = ops::clamp(ops::add_scalar(ops::scale(cos, 0.5), 0.5), kProbEps, 1.0 - kProbEps);
  std::vector<double> target(mask.values().begin(), mask.values().end());
  if (polarity == RclPolarity::AlignUnchanged) {
    for (auto& t : target) t = 1.0 - t;
  }
  return ops::bce_mean(sim, Tensor::from(mask.shape(), std::move(target)), kProbEps);
}

void init_params(ParamStore& params, const std::array<std::size_t, backbone::kStages>& widths, std::uint64_t seed) {
  for (std::size_t i = 0; i < backbone::kStages; ++i) {
    const std::size_t stage = i + 1;
    const std::size_t c = widths[i];
    // Fan-in over all seven branches, since their outputs are summed.
    std::size_t fan_in = 0;
    for (const auto& k : kAsymKernels) fan_in += c * k[0] * k[1];
    for (const auto& k : kAsymKernels) {
      const auto name = kernel_name(stage, k);
      params.add(name, kaiming_uniform(name, {c, c, k[0], k[1]}, fan_in, seed));
    }
    const auto p = prefix(stage);
    params.add(p + "asym.bias", bias_uniform(p + "asym.bias", c, fan_in, seed));
    params.add(p + "mlp.fc1.weight", kaiming_uniform(p + "mlp.fc1.weight", {c, c, 1, 1}, c, seed));
    params.add(p + "mlp.fc1.bias", bias_uniform(p + "mlp.fc1.bias", c, c, seed));
    params.add(p + "mlp.fc2.weight", kaiming_uniform(p + "mlp.fc2.weight", {1, c, 1, 1}, c, seed));
    params.add(p + "mlp.fc2.bias", bias_uniform(p + "mlp.fc2.bias", 1, c, seed));
  }
}

ShapeBranchOutput shape_branch(std::size_t stage, const Tensor& context, const ParamStore& params) {
  if (stage < 1 || stage > backbone::kStages) throw PreconditionError("shape_branch: stage must be in 1..4");
  Tensor acc;
  for (const auto& k : kAsymKernels) {
    const auto& w = params.get(kernel_name(stage, k));
    auto y = ops::conv2d(context, w, 1, ops::same_padding(w));
    acc = acc.defined() ? ops::add(acc, y) : y;
  }
  const auto p = prefix(stage);
  ShapeBranchOutput out;
  out.shape_features = ops::relu(ops::add_channel_bias(acc, params.get(p + "asym.bias")));
  auto hidden = ops::relu(conv1x1(out.shape_features, params, p + "mlp.fc1"));
  out.mask = ops::sigmoid(conv1x1(hidden, params, p + "mlp.fc2"));
  return out;
}

Tensor shape_supervision_loss(std::span<const std::optional<Tensor>> masks, const Tensor& gt) {
  require_binary(gt, "shape_supervision_loss");
  Tensor total;
  for (const auto& m : masks) {
    if (!m) continue;
    const auto target = downsample_mask(gt, m->dim(2), m->dim(3));
    auto term = ops::bce_mean(*m, target, kProbEps);
    total = total.defined() ? ops::add(total, term) : term;
  }
  return total.defined() ? total : Tensor::scalar(0.0);
}

}  // namespace fino::bsa
