#include "fino/param_store.hpp"

#include <cmath>
#include <random>

namespace fino {

Tensor& ParamStore::add(const std::string& name, Tensor value) {
  if (name.empty()) throw PreconditionError("parameter name must not be empty");
  if (contains(name)) throw PreconditionError("duplicate parameter name: " + name);
  if (!value.requires_grad()) value.set_requires_grad(true);
  return params_.emplace(name, std::move(value)).first->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw PreconditionError("unknown parameter: " + name);
  return it->second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw PreconditionError("unknown parameter: " + name);
  return it->second;
}

std::size_t ParamStore::total_values() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.numel();
  return n;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

void ParamStore::zero_grad() {
  for (auto& [_, t] : params_) t.zero_grad();
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  for (const auto& [name, t] : params_) out.add(name, t.clone());
  return out;
}

ParamStore ParamStore::frozen() const {
  ParamStore out;
  for (const auto& [name, t] : params_) {
    auto v = t.values();
    out.params_.emplace(name, Tensor::from(t.shape(), std::vector<double>(v.begin(), v.end())));
  }
  return out;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, const std::string& label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : label) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(splitmix64(seed) ^ h);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

namespace {

Tensor uniform_init(const std::string& name, Shape shape, double bound, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, name));
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = bound * (2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0);
  return Tensor::from(std::move(shape), std::move(values), true);
}

}  // namespace

Tensor kaiming_uniform(const std::string& name, Shape shape, std::size_t fan_in, std::uint64_t seed) {
  if (fan_in == 0) throw PreconditionError("kaiming_uniform: fan_in must be positive");
  return uniform_init(name, std::move(shape), std::sqrt(6.0 / static_cast<double>(fan_in)), seed);
}

Tensor bias_uniform(const std::string& name, std::size_t size, std::size_t fan_in, std::uint64_t seed) {
  if (fan_in == 0) throw PreconditionError("bias_uniform: fan_in must be positive");
  return uniform_init(name, {size}, 1.0 / std::sqrt(static_cast<double>(fan_in)), seed);
}

}  // namespace fino
