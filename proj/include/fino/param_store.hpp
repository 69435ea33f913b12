#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fino/tensor.hpp"

namespace fino {

/// Named learnable tensors. Iteration is sorted by name, so every traversal
/// (optimizer, checkpoint, gradient check) sees the same order.
class ParamStore {
 public:
  /// Adds a new trainable entry. Duplicate names are rejected.
  Tensor& add(const std::string& name, Tensor value);

  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  /// Throws PreconditionError naming the missing entry.
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);

  std::size_t size() const { return params_.size(); }
  std::size_t total_values() const;
  std::vector<std::string> names() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  /// Deep copy with fresh leaves (no shared storage).
  ParamStore clone() const;
  /// Copy whose entries do not require gradients; forward passes over it
  /// record no backward closures.
  ParamStore frozen() const;

 private:
  std::map<std::string, Tensor> params_;
};

/// Deterministic 64-bit stream id from a seed and a label (SplitMix64 over an
/// FNV-1a hash of the label).
std::uint64_t derive_seed(std::uint64_t seed, const std::string& label);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/// Kaiming-uniform (fan-in) initialization: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
/// The stream depends only on (seed, name), not on creation order.
Tensor kaiming_uniform(const std::string& name, Shape shape, std::size_t fan_in, std::uint64_t seed);
/// Bias init U(-1/sqrt(fan_in), 1/sqrt(fan_in)), same stream rule.
Tensor bias_uniform(const std::string& name, std::size_t size, std::size_t fan_in, std::uint64_t seed);

}  // namespace fino
