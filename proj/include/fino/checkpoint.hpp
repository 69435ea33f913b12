#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include "fino/model.hpp"
#include "fino/optim.hpp"
#include "fino/param_store.hpp"

namespace fino::train {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  ParamStore params;
  std::map<std::string, Moments> moments;
  std::uint64_t step = 0;
  std::uint64_t config_hash = 0;
  model::ModelConfig model;
  /// Extents of the training images; evaluation rejects anything else.
  std::size_t input_height = 0;
  std::size_t input_width = 0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Little-endian "FINO", u32 version, then one record per tensor:
/// u32 name length, name, u8 dtype tag (1 = f64), u32 rank, u64 extents,
/// raw f64 values. Metadata travels as `meta.*` tensors and optimizer state as
/// `opt.m.*` / `opt.v.*`.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fino::train
