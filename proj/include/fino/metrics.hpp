#pragma once

#include <cstdint>
#include <string>

#include "fino/tensor.hpp"

namespace fino::metrics {

struct Confusion {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  Confusion& operator+=(const Confusion& other) {
    tp += other.tp;
    fp += other.fp;
    fn += other.fn;
    tn += other.tn;
    return *this;
  }
  bool operator==(const Confusion&) const = default;
};

struct MetricsReport {
  Confusion counts;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double iou = 0.0;
};

/// Pixel-wise counts. Both masks must be binary and of equal shape.
Confusion confusion(const Tensor& pred, const Tensor& gt);

/// Ratios from counts. A 0/0 ratio is 1 when the union tp+fp+fn is empty and
/// 0 otherwise.
MetricsReport metrics(const Confusion& counts);

/// One JSON object with keys tp, fp, fn, tn, precision, recall, f1, iou.
std::string to_json(const MetricsReport& report);

/// Reference values reported for the full model on LEVIR-CD. Documentation
/// only; nothing at desk scale is expected to reach them.
inline constexpr double kReferenceLevirF1 = 0.9241;
inline constexpr double kReferenceLevirIoU = 0.8589;

}  // namespace fino::metrics
