#include "fino/metrics.hpp"

#include <json.hpp>

namespace fino::metrics {

Confusion confusion(const Tensor& pred, const Tensor& gt) {
  if (pred.shape() != gt.shape()) {
    throw PreconditionError("confusion: shape mismatch " + shape_str(pred.shape()) + " vs " + shape_str(gt.shape()));
  }
  Confusion c;
  const auto p = pred.values(), g = gt.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if ((p[i] != 0.0 && p[i] != 1.0) || (g[i] != 0.0 && g[i] != 1.0)) {
      throw PreconditionError("confusion: masks must be binary");
    }
    const bool pp = p[i] == 1.0, gp = g[i] == 1.0;
    if (pp && gp) ++c.tp;
    else if (pp) ++c.fp;
    else if (gp) ++c.fn;
    else ++c.tn;
  }
  return c;
}

MetricsReport metrics(const Confusion& counts) {
  const auto tp = static_cast<double>(counts.tp);
  const auto fp = static_cast<double>(counts.fp);
  const auto fn = static_cast<double>(counts.fn);
  const bool empty_union = counts.tp + counts.fp + counts.fn == 0;
  auto ratio = [empty_union](double num, double den) { return den > 0.0 ? num / den : (empty_union ? 1.0 : 0.0); };

  MetricsReport r;
  r.counts = counts;
  r.precision = ratio(tp, tp + fp);
  r.recall = ratio(tp, tp + fn);
  r.f1 = ratio(2.0 * r.precision * r.recall, r.precision + r.recall);
  r.iou = ratio(tp, tp + fp + fn);
  return r;
}

std::string to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["tp"] = report.counts.tp;
  j["fp"] = report.counts.fp;
  j["fn"] = report.counts.fn;
  j["tn"] = report.counts.tn;
  j["precision"] = report.precision;
  j["recall"] = report.recall;
  j["f1"] = report.f1;
  j["iou"] = report.iou;
  return j.dump();
}

}  // namespace fino::metrics
