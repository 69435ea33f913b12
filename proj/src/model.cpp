#include "fino/model.hpp"

#include <vector>

#include "fino/ops.hpp"

namespace fino::model {

void ModelConfig::validate() const {
  backbone.validate();
  if (attention.region == 0) throw PreconditionError("model: region size must be positive");
}

void init_params(ParamStore& params, const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  backbone::init_params(params, config.backbone, seed);
  cdl::init_params(params, config.backbone.widths, seed);
  bsa::init_params(params, config.backbone.widths, seed);
  head::init_params(params, config.backbone.widths, seed);
}

ForwardResult forward(const Tensor& image_a, const Tensor& image_b, const ParamStore& params,
                      const ModelConfig& config, const ForwardOverrides* overrides) {
  if (image_a.shape() != image_b.shape()) {
    throw PreconditionError("forward: image shapes differ: " + shape_str(image_a.shape()) + " vs " +
                            shape_str(image_b.shape()));
  }
  ForwardResult r;
  r.features_a = backbone::encode(image_a, params, config.backbone);
  r.features_b = backbone::encode(image_b, params, config.backbone);

  std::array<Tensor, backbone::kStages> diffs;
  for (std::size_t i = 0; i < backbone::kStages; ++i) {
    diffs[i] = backbone::diff(r.features_a.stages[i], r.features_b.stages[i]);
    r.stages[i].diff = diffs[i];
  }

  auto produce = [&](std::size_t stage, const std::optional<cdl::ContextFeature>& context) -> Tensor {
    const std::size_t i = stage - 1;
    auto& st = r.stages[i];
    const auto& xa = r.features_a.stages[i];
    const auto& xb = r.features_b.stages[i];
    st.context = context;
    if (config.use_rega) {
      if (context) {
        std::optional<Tensor> mask;
        Tensor shape_features = context->context;
        if (config.use_bsa) {
          st.shape = bsa::shape_branch(stage, context->context, params);
          shape_features = st.shape->shape_features;
          mask = st.shape->mask;
          if (overrides && overrides->gate_masks[i]) mask = overrides->gate_masks[i];
        }
        auto g = head::rega_gate(stage, xa, xb, shape_features, mask, params, config.gate);
        st.gate = g.gate;
        st.gated_a = g.gated_a;
        st.gated_b = g.gated_b;
      } else if (stage < backbone::kStages && r.stages[i + 1].gate) {
        st.gate = ops::resize(*r.stages[i + 1].gate, xa.dim(2), xa.dim(3), ops::ResizeMode::Bilinear);
        st.gated_a = ops::broadcast_mul(xa, *st.gate);
        st.gated_b = ops::broadcast_mul(xb, *st.gate);
      } else {
        st.gated_a = xa;
        st.gated_b = xb;
      }
    } else {
      if (context && config.use_bsa) st.shape = bsa::shape_branch(stage, context->context, params);
      st.gated_a = xa;
      st.gated_b = xb;
    }
    st.change = head::ccl(stage, st.gated_a, st.gated_b, params);
    return st.change.change;
  };

  cdl::cascade(diffs, config.stages, produce, params, config.attention);
  r.output = head::seg_head(r.stages[0].change.change, params, image_a.dim(2), image_a.dim(3));
  return r;
}

LossTerms component_losses(const ForwardResult& result, const Tensor& gt_mask, double lambda,
                           const ModelConfig& config) {
  if (gt_mask.shape() != result.output.prob.shape()) {
    throw PreconditionError("component_losses: mask " + shape_str(gt_mask.shape()) + " does not match prediction " +
                            shape_str(result.output.prob.shape()));
  }
  bsa::require_binary(gt_mask, "component_losses");
  LossTerms terms;
  terms.l_cd = ops::bce_mean(result.output.prob, gt_mask, bsa::kProbEps);

  std::vector<std::optional<Tensor>> masks;
  for (const auto& st : result.stages) {
    if (st.shape) masks.emplace_back(st.shape->mask);
  }
  terms.l_sal = bsa::shape_supervision_loss(masks, gt_mask);

  if (lambda > 0.0 && config.use_bsa) {
    const auto& a4 = result.features_a.stages[backbone::kStages - 1];
    const auto& b4 = result.features_b.stages[backbone::kStages - 1];
    terms.l_gcl = bsa::global_brightness_loss(a4, b4);
    terms.l_rcl = bsa::region_align_loss(a4, b4, bsa::downsample_mask(gt_mask, a4.dim(2), a4.dim(3)),
                                         config.polarity);
  } else {
    terms.l_gcl = Tensor::scalar(0.0);
    terms.l_rcl = Tensor::scalar(0.0);
  }
  return terms;
}

}  // namespace fino::model
