#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fino/tensor.hpp"

namespace fino::data {

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two co-registered images [3,H,W] in [0,1] and a binary change mask [1,H,W].
struct BitemporalPair {
  Tensor image_a;
  Tensor image_b;
  Tensor mask;
  std::string id;

  std::size_t height() const { return mask.dim(1); }
  std::size_t width() const { return mask.dim(2); }
  /// Shapes agree, values in range, mask binary. With `backbone_ready` the
  /// extents must also be divisible by 32.
  void validate(bool backbone_ready = true) const;
};

struct SynthConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t min_objects = 3;
  std::size_t max_objects = 6;
  std::size_t min_object_size = 6;
  std::size_t max_object_size = 16;
  /// Share of objects rendered as pseudo-changes (same footprint, new look).
  double pseudo_fraction = 0.0;
  /// Share of the remaining objects that are true changes (present in one
  /// image only); the rest are static.
  double change_fraction = 0.5;
  /// Share of objects drawn rotated rather than axis-aligned.
  double rotated_fraction = 0.3;
  /// Per-image additive brightness shift drawn from [-brightness, brightness].
  double brightness = 0.0;
  /// Per-channel gain drawn from [1 - tint, 1 + tint].
  double tint = 0.0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class Population { Static, Change, Pseudo };

struct SynthObject {
  Population population = Population::Static;
  /// Polygon corners (x, y) in pixel units; pixel (r, c) is covered when its
  /// center (c + 0.5, r + 0.5) lies inside.
  std::array<std::array<double, 2>, 4> corners{};
  bool in_a = true;
  bool in_b = true;
};

struct SynthScene {
  BitemporalPair pair;
  std::vector<SynthObject> objects;
};

/// Deterministic in (cfg.seed, index). Throws GenerationError when the objects
/// cannot be placed without overlap.
SynthScene generate_scene(const SynthConfig& cfg, std::uint64_t index);
BitemporalPair generate_pair(const SynthConfig& cfg, std::uint64_t index);

/// Row-major non-overlapping tiles; remainder rows/columns are dropped. Ids are
/// "<id>_r<row>_c<col>".
std::vector<BitemporalPair> tile(const BitemporalPair& pair, std::size_t tile_size);

struct AugmentPolicy {
  double hflip_prob = 0.0;
  double vflip_prob = 0.0;
  /// Probability of a rotation by 90, 180 or 270 degrees (uniform).
  double rot90_prob = 0.0;
  /// Random square crop side; 0 disables cropping.
  std::size_t crop = 0;
  /// Per-image additive brightness drawn from [-brightness, brightness].
  double brightness = 0.0;
};

BitemporalPair hflip(const BitemporalPair& pair);
BitemporalPair vflip(const BitemporalPair& pair);
/// Counter-clockwise rotation by k * 90 degrees.
BitemporalPair rot90(const BitemporalPair& pair, int k);
BitemporalPair crop(const BitemporalPair& pair, std::size_t top, std::size_t left, std::size_t height,
                    std::size_t width);
/// Adds the shifts to image_a / image_b and clamps to [0,1]; mask untouched.
BitemporalPair shift_brightness(const BitemporalPair& pair, double shift_a, double shift_b);

/// Same geometric transform on both images and the mask; brightness on the
/// images only.
BitemporalPair augment(const BitemporalPair& pair, const AugmentPolicy& policy, std::mt19937_64& rng);

/// Reads root/{A,B,label}/<name>.png, sorted by name. Labels must be 0/255.
std::vector<BitemporalPair> load_dataset(const std::filesystem::path& root);
/// One PNG as a [channels,H,W] tensor scaled to [0,1].
Tensor load_image(const std::filesystem::path& path, std::size_t channels);
/// Writes the pair under root/{A,B,label}/<id>.png, creating directories.
void save_pair(const std::filesystem::path& root, const BitemporalPair& pair);

struct Batch {
  Tensor image_a;  // [B,3,H,W]
  Tensor image_b;
  Tensor mask;     // [B,1,H,W]
};

Batch make_batch(std::span<const BitemporalPair> pairs, std::span<const std::size_t> indices);

/// Uniform double in [0,1) from the top 53 bits; independent of the standard
/// library's distribution implementations.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
inline double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

}  // namespace fino::data
