#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "fino/data.hpp"
#include "fino/model.hpp"
#include "fino/tensor.hpp"

namespace fino::train {

/// Bad config text: unknown key, malformed value, violated invariant.
class ConfigError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

struct TrainConfig {
  std::size_t epochs = 300;
  std::size_t batch_size = 8;
  double lr = 1e-3;
  double poly_power = 0.9;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  double lambda = 0.1;
  double threshold = 0.5;
  data::AugmentPolicy augment;
  model::ModelConfig model;

  void validate() const;
  /// Canonical `key = value` rendering; parse_config(to_text()) round-trips.
  std::string to_text() const;
  /// FNV-1a of to_text().
  std::uint64_t hash() const;
};

/// UTF-8 `key = value` lines; `#` starts a comment; blank lines ignored.
/// Unknown keys and malformed values throw ConfigError.
TrainConfig parse_config(std::string_view text);
TrainConfig load_config(const std::filesystem::path& path);

}  // namespace fino::train
