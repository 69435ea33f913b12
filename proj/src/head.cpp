#include "fino/head.hpp"

#include <algorithm>
#include <string>

#include "fino/ops.hpp"

namespace fino::head {

namespace {

std::string stage_name(const char* module, std::size_t stage) {
  return std::string(module) + ".stage" + std::to_string(stage) + ".";
}

void add_conv(ParamStore& params, const std::string& name, std::size_t cout, std::size_t cin, std::size_t k,
              std::uint64_t seed) {
  params.add(name + ".weight", kaiming_uniform(name + ".weight", {cout, cin, k, k}, cin * k * k, seed));
  params.add(name + ".bias", bias_uniform(name + ".bias", cout, cin * k * k, seed));
}

Tensor conv(const Tensor& x, const ParamStore& params, const std::string& name) {
  const auto& w = params.get(name + ".weight");
  return ops::add_channel_bias(ops::conv2d(x, w, 1, ops::same_padding(w)), params.get(name + ".bias"));
}

void check_stage(std::size_t stage, const char* op) {
  if (stage < 1 || stage > backbone::kStages) throw PreconditionError(std::string(op) + ": stage must be in 1..4");
}

}  // namespace

void init_params(ParamStore& params, const std::array<std::size_t, backbone::kStages>& widths, std::uint64_t seed) {
  for (std::size_t i = 0; i < backbone::kStages; ++i) {
    const std::size_t c = widths[i];
    const std::size_t hidden = std::max<std::size_t>(1, c / kChannelReduction);
    add_conv(params, stage_name("rega", i + 1) + "gate", 1, 3 * c, 1, seed);
    const auto ccl = stage_name("ccl", i + 1);
    params.add(ccl + "proj", kaiming_uniform(ccl + "proj", {c, c, 1, 1}, c, seed));
    add_conv(params, ccl + "mlp.fc1", hidden, c, 1, seed);
    add_conv(params, ccl + "mlp.fc2", c, hidden, 1, seed);
  }
  const std::size_t c1 = widths[0];
  add_conv(params, "head.conv0", c1, c1, 1, seed);
  add_conv(params, "head.conv1", c1, c1, 3, seed);
  add_conv(params, "head.conv2", c1, c1, 3, seed);
  add_conv(params, "head.conv3", 1, c1, 3, seed);
}

GateOutput rega_gate(std::size_t stage, const Tensor& x_a, const Tensor& x_b, const Tensor& shape_features,
                     const std::optional<Tensor>& shape_mask, const ParamStore& params, const GateOptions& options) {
  check_stage(stage, "rega_gate");
  if (x_a.shape() != x_b.shape() || x_a.shape() != shape_features.shape()) {
    throw PreconditionError("rega_gate: extent mismatch between " + shape_str(x_a.shape()) + ", " +
                            shape_str(x_b.shape()) + " and " + shape_str(shape_features.shape()));
  }
  const auto& s = x_a.shape();
  GateOutput out;
  out.gate = ops::sigmoid(conv(ops::concat_channels({x_a, x_b, shape_features}), params,
                               stage_name("rega", stage) + "gate"));
  if (options.use_shape_mask && shape_mask) {
    if (shape_mask->shape() != Shape{s[0], 1, s[2], s[3]}) {
      throw PreconditionError("rega_gate: shape mask " + shape_str(shape_mask->shape()) + " does not match " +
                              shape_str(s));
    }
    out.gate = ops::add(out.gate, shape_mask->detach());
  }
  if (options.clamp) out.gate = ops::clamp(out.gate, 0.0, 1.0);
  out.gated_a = ops::broadcast_mul(x_a, out.gate);
  out.gated_b = ops::broadcast_mul(x_b, out.gate);
  return out;
}

ChangeFeature ccl(std::size_t stage, const Tensor& gated_a, const Tensor& gated_b, const ParamStore& params) {
  check_stage(stage, "ccl");
  if (gated_a.shape() != gated_b.shape()) throw PreconditionError("ccl: shape mismatch");
  const auto p = stage_name("ccl", stage);
  const auto& w = params.get(p + "proj");
  ChangeFeature out;
  out.distance = ops::abs(ops::sub(ops::conv2d(gated_a, w), ops::conv2d(gated_b, w)));
  const auto pooled = ops::add(ops::global_max_pool(out.distance), ops::global_avg_pool(out.distance));
  const auto hidden = ops::relu(conv(pooled, params, p + "mlp.fc1"));
  out.channel_weights = ops::sigmoid(conv(hidden, params, p + "mlp.fc2"));
  out.change = ops::scale_channels(out.distance, out.channel_weights);
  return out;
}

HeadOutput seg_head(const Tensor& z1, const ParamStore& params, std::size_t height, std::size_t width) {
  auto x = ops::relu(conv(z1, params, "head.conv0"));
  x = ops::relu(conv(x, params, "head.conv1"));
  x = ops::relu(conv(x, params, "head.conv2"));
  x = conv(x, params, "head.conv3");
  HeadOutput out;
  out.logits = ops::resize(x, height, width, ops::ResizeMode::Bilinear);
  out.prob = ops::sigmoid(out.logits);
  return out;
}

Tensor decide(const Tensor& prob, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw PreconditionError("decide: threshold must lie in (0,1)");
  std::vector<double> mask(prob.numel());
  const auto p = prob.values();
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = p[i] > threshold ? 1.0 : 0.0;
  return Tensor::from(prob.shape(), std::move(mask));
}

}  // namespace fino::head
