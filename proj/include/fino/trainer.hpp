#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fino/checkpoint.hpp"
#include "fino/config.hpp"
#include "fino/data.hpp"
#include "fino/metrics.hpp"

namespace fino::train {

struct StepLog {
  std::uint64_t step = 0;
  double lr = 0.0;
  double l_cd = 0.0, l_sal = 0.0, l_gcl = 0.0, l_rcl = 0.0;
  double total = 0.0;

  /// {"step":..,"lr":..,"l_cd":..,"l_sal":..,"l_gcl":..,"l_rcl":..,"total":..}
  std::string to_json() const;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<StepLog> log;
  std::uint64_t skipped_steps = 0;
};

/// Raised when a step produces a non-finite loss. Carries the parameters of
/// the last step whose loss was finite.
class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& what, Checkpoint last_good, std::vector<StepLog> log)
      : NumericError(what), last_good_(std::move(last_good)), log_(std::move(log)) {}
  const Checkpoint& last_good() const { return last_good_; }
  const std::vector<StepLog>& log() const { return log_; }

 private:
  Checkpoint last_good_;
  std::vector<StepLog> log_;
};

using StepCallback = std::function<void(const StepLog&)>;

/// epochs * ceil(dataset_size / batch_size).
std::uint64_t total_steps(const TrainConfig& config, std::size_t dataset_size);

/// Seeded shuffle per epoch, optional per-pair augmentation, full forward,
/// combined loss, backward, AdamW with the poly schedule. All pairs must share
/// extents divisible by 32.
TrainResult train(const TrainConfig& config, std::span<const data::BitemporalPair> dataset,
                  const StepCallback& on_step = {});

/// Change probabilities [B,1,H,W] for image batches [B,3,H,W].
Tensor predict(const Checkpoint& ckpt, const Tensor& image_a, const Tensor& image_b);

/// Globally accumulated counts at threshold T. With `dump_dir` each predicted
/// mask is written as <dump_dir>/<id>.png (0/255). Pairs whose extents differ
/// from the training extents are rejected.
metrics::MetricsReport evaluate(const Checkpoint& ckpt, std::span<const data::BitemporalPair> dataset,
                                double threshold, const std::optional<std::filesystem::path>& dump_dir = {});

}  // namespace fino::train
