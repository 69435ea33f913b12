#include "fino/cdl.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fino/ops.hpp"

namespace fino::cdl {

namespace {

std::string prefix(std::size_t stage) { return "cdl.stage" + std::to_string(stage) + "."; }

Tensor conv1x1(const Tensor& x, const ParamStore& params, const std::string& name) {
  return ops::add_channel_bias(ops::conv2d(x, params.get(name + ".weight")), params.get(name + ".bias"));
}

}  // namespace

std::size_t effective_region(std::size_t region, std::size_t height, std::size_t width) {
  if (region == 0) throw PreconditionError("region size must be positive");
  return std::min({region, height, width});
}

Tensor region_softmax(const Tensor& scores, std::size_t region, double dk) {
  const auto& s = scores.shape();
  if (s.size() != 4 || s[1] != 1) throw PreconditionError("region_softmax: expected [B,1,H,W], got " + shape_str(s));
  if (dk < 1.0) throw PreconditionError("region_softmax: dk must be >= 1");
  const std::size_t batch = s[0], h = s[2], w = s[3];
  if (region == 0 || h % region != 0 || w % region != 0) {
    throw PreconditionError("region_softmax: region " + std::to_string(region) + " does not tile " +
                            std::to_string(h) + "x" + std::to_string(w));
  }
  const std::size_t ry = h / region, rx = w / region, area = region * region;
  const std::size_t rows = batch * ry * rx;
  // to_rows[row * area + k] = flat position of element k of region `row`.
  std::vector<std::size_t> to_rows(rows * area), to_map(batch * h * w);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t gy = 0; gy < ry; ++gy)
      for (std::size_t gx = 0; gx < rx; ++gx)
        for (std::size_t i = 0; i < region; ++i)
          for (std::size_t j = 0; j < region; ++j) {
            const std::size_t row = (b * ry + gy) * rx + gx;
            const std::size_t pos = (b * h + gy * region + i) * w + gx * region + j;
            to_rows[row * area + i * region + j] = pos;
            to_map[pos] = row * area + i * region + j;
          }
  auto flat = ops::gather(scores, {rows, area}, std::move(to_rows));
  auto attn = ops::softmax(ops::scale(flat, 1.0 / std::sqrt(dk)), 1);
  return ops::gather(attn, s, std::move(to_map));
}

void init_params(ParamStore& params, const std::array<std::size_t, backbone::kStages>& widths, std::uint64_t seed) {
  for (std::size_t i = 0; i < backbone::kStages; ++i) {
    const auto p = prefix(i + 1);
    const std::size_t c = widths[i];
    const std::size_t guide = i + 1 < backbone::kStages ? widths[i + 1] : widths[i];
    params.add(p + "phi1.weight", kaiming_uniform(p + "phi1.weight", {1, c + guide, 1, 1}, c + guide, seed));
    params.add(p + "phi1.bias", bias_uniform(p + "phi1.bias", 1, c + guide, seed));
    params.add(p + "phi2.weight", kaiming_uniform(p + "phi2.weight", {c, c, 1, 1}, c, seed));
    params.add(p + "phi2.bias", bias_uniform(p + "phi2.bias", c, c, seed));
  }
}

ContextFeature cdl_forward(std::size_t stage, const Tensor& diff, const std::optional<Tensor>& guide,
                           const ParamStore& params, const RegionAttnConfig& config) {
  if (stage < 1 || stage > backbone::kStages) throw PreconditionError("cdl_forward: stage must be in 1..4");
  const auto& s = diff.shape();
  if (s.size() != 4) throw PreconditionError("cdl_forward: expected rank-4 difference features");
  const auto p = prefix(stage);

  ContextFeature out;
  const auto value = conv1x1(diff, params, p + "phi2");
  if (!config.enabled) {
    out.context = value;
    return out;
  }
  const std::size_t region = effective_region(config.region, s[2], s[3]);
  const Tensor g = guide ? ops::resize(*guide, s[2], s[3], ops::ResizeMode::Bilinear) : diff;
  const auto fused = ops::concat_channels({diff, g});
  out.scores = conv1x1(fused, params, p + "phi1");
  out.attention = region_softmax(out.scores, region, static_cast<double>(fused.dim(1)));
  out.context = ops::broadcast_mul(value, out.attention);
  return out;
}

void CascadeRunner::expect(std::size_t stage) {
  if (next_ == 0 || stage != next_) {
    throw PreconditionError("cascade: stage " + std::to_string(stage) + " invoked out of order (expected " +
                            (next_ == 0 ? std::string("none, cascade complete") : std::to_string(next_)) + ")");
  }
  --next_;
}

ContextFeature CascadeRunner::advance(std::size_t stage, const Tensor& diff, const std::optional<Tensor>& guide) {
  if (stage < backbone::kStages && stage >= 1 && !guide) {
    throw PreconditionError("cascade: stage " + std::to_string(stage) + " needs the change feature of stage " +
                            std::to_string(stage + 1));
  }
  expect(stage);
  return cdl_forward(stage, diff, guide, params_, config_);
}

void CascadeRunner::skip(std::size_t stage) { expect(stage); }

std::array<std::optional<ContextFeature>, backbone::kStages> cascade(
    const std::array<Tensor, backbone::kStages>& diffs, const std::array<bool, backbone::kStages>& enabled,
    const ChangeProducer& produce, const ParamStore& params, const RegionAttnConfig& config) {
  std::array<std::optional<ContextFeature>, backbone::kStages> contexts;
  CascadeRunner runner(params, config);
  std::optional<Tensor> guide;
  for (std::size_t stage = backbone::kStages; stage >= 1; --stage) {
    const std::size_t i = stage - 1;
    if (enabled[i]) {
      contexts[i] = runner.advance(stage, diffs[i], guide);
    } else {
      runner.skip(stage);
    }
    guide = produce(stage, contexts[i]);
  }
  return contexts;
}

}  // namespace fino::cdl
