#include "fino/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fino/image_io.hpp"
#include "fino/param_store.hpp"

namespace fino::data {

namespace {

constexpr std::size_t kPlaceAttempts = 200;
constexpr double kPlacementMargin = 2.0;

struct Planar {
  std::size_t c = 0, h = 0, w = 0;
  std::vector<double> v;

  Planar(std::size_t channels, std::size_t height, std::size_t width)
      : c(channels), h(height), w(width), v(channels * height * width, 0.0) {}
  explicit Planar(const Tensor& t) : c(t.dim(0)), h(t.dim(1)), w(t.dim(2)), v(t.values().begin(), t.values().end()) {}

  double& at(std::size_t ch, std::size_t y, std::size_t x) { return v[(ch * h + y) * w + x]; }
  double at(std::size_t ch, std::size_t y, std::size_t x) const { return v[(ch * h + y) * w + x]; }
  Tensor tensor() const { return Tensor::from({c, h, w}, v); }
};

double gaussian(std::mt19937_64& rng) {
  // Box-Muller; one draw per call keeps the stream layout simple.
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

bool inside_convex(const std::array<std::array<double, 2>, 4>& poly, double x, double y) {
  bool pos = false, neg = false;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& a = poly[i];
    const auto& b = poly[(i + 1) % 4];
    const double cross = (b[0] - a[0]) * (y - a[1]) - (b[1] - a[1]) * (x - a[0]);
    pos = pos || cross > 0.0;
    neg = neg || cross < 0.0;
  }
  return !(pos && neg);
}

struct Look {
  std::array<double, 3> color{};
  bool striped = false;
};

Look random_look(std::mt19937_64& rng) {
  Look l;
  for (auto& ch : l.color) ch = uniform(rng, 0.45, 0.95);
  l.striped = uniform01(rng) < 0.5;
  return l;
}

Look distinct_look(std::mt19937_64& rng, const Look& base) {
  for (;;) {
    Look l = random_look(rng);
    double dist = 0.0;
    for (std::size_t c = 0; c < 3; ++c) dist += std::abs(l.color[c] - base.color[c]);
    if (dist >= 0.45) return l;
  }
}

void paint(Planar& img, const SynthObject& obj, const Look& look) {
  double x0 = img.w, x1 = 0, y0 = img.h, y1 = 0;
  for (const auto& p : obj.corners) {
    x0 = std::min(x0, p[0]);
    x1 = std::max(x1, p[0]);
    y0 = std::min(y0, p[1]);
    y1 = std::max(y1, p[1]);
  }
  const auto r0 = static_cast<std::size_t>(std::max(0.0, std::floor(y0)));
  const auto r1 = std::min(img.h, static_cast<std::size_t>(std::max(0.0, std::ceil(y1))));
  const auto c0 = static_cast<std::size_t>(std::max(0.0, std::floor(x0)));
  const auto c1 = std::min(img.w, static_cast<std::size_t>(std::max(0.0, std::ceil(x1))));
  for (std::size_t r = r0; r < r1; ++r)
    for (std::size_t c = c0; c < c1; ++c) {
      if (!inside_convex(obj.corners, c + 0.5, r + 0.5)) continue;
      const double shade = look.striped && ((r + c) / 2) % 2 == 0 ? 0.8 : 1.0;
      for (std::size_t ch = 0; ch < 3; ++ch) img.at(ch, r, c) = look.color[ch] * shade;
    }
}

void photometric(Planar& img, std::mt19937_64& rng, const SynthConfig& cfg) {
  const double shift = uniform(rng, -cfg.brightness, cfg.brightness);
  std::array<double, 3> gain{};
  for (auto& g : gain) g = uniform(rng, 1.0 - cfg.tint, 1.0 + cfg.tint);
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t i = 0; i < img.h * img.w; ++i) {
      double& v = img.v[ch * img.h * img.w + i];
      v = std::clamp(v * gain[ch] + shift, 0.0, 1.0);
    }
  if (cfg.noise_sigma > 0.0) {
    for (auto& v : img.v) v = std::clamp(v + cfg.noise_sigma * gaussian(rng), 0.0, 1.0);
  }
}

BitemporalPair assemble(const Planar& a, const Planar& b, const Planar& mask, std::string id) {
  return {a.tensor(), b.tensor(), mask.tensor(), std::move(id)};
}

template <typename F>
BitemporalPair remap(const BitemporalPair& pair, std::size_t out_h, std::size_t out_w, F source, std::string id) {
  const Planar a(pair.image_a), b(pair.image_b), m(pair.mask);
  Planar oa(a.c, out_h, out_w), ob(b.c, out_h, out_w), om(1, out_h, out_w);
  for (std::size_t y = 0; y < out_h; ++y)
    for (std::size_t x = 0; x < out_w; ++x) {
      const auto [sy, sx] = source(y, x);
      for (std::size_t ch = 0; ch < a.c; ++ch) {
        oa.at(ch, y, x) = a.at(ch, sy, sx);
        ob.at(ch, y, x) = b.at(ch, sy, sx);
      }
      om.at(0, y, x) = m.at(0, sy, sx);
    }
  return assemble(oa, ob, om, std::move(id));
}

Tensor image_tensor(const io::Image8& img) {
  Planar p(img.channels, img.height, img.width);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t ch = 0; ch < img.channels; ++ch)
        p.at(ch, y, x) = img.pixels[(y * img.width + x) * img.channels + ch] / 255.0;
  return p.tensor();
}

io::Image8 image8(const Tensor& t, double scale) {
  const Planar p(t);
  io::Image8 img{p.w, p.h, p.c, std::vector<std::uint8_t>(p.c * p.h * p.w)};
  for (std::size_t y = 0; y < p.h; ++y)
    for (std::size_t x = 0; x < p.w; ++x)
      for (std::size_t ch = 0; ch < p.c; ++ch) {
        const double v = std::clamp(p.at(ch, y, x) * scale, 0.0, 255.0);
        img.pixels[(y * p.w + x) * p.c + ch] = static_cast<std::uint8_t>(std::lround(v));
      }
  return img;
}

}  // namespace

void BitemporalPair::validate(bool backbone_ready) const {
  if (!image_a.defined() || !image_b.defined() || !mask.defined()) throw PreconditionError("pair " + id + ": undefined tensor");
  if (mask.rank() != 3 || mask.dim(0) != 1) throw PreconditionError("pair " + id + ": mask must be [1,H,W]");
  const Shape img{3, mask.dim(1), mask.dim(2)};
  if (image_a.shape() != img || image_b.shape() != img) {
    throw PreconditionError("pair " + id + ": images must be " + shape_str(img));
  }
  for (const auto* t : {&image_a, &image_b})
    for (double v : t->values())
      if (v < 0.0 || v > 1.0) throw PreconditionError("pair " + id + ": image values outside [0,1]");
  for (double v : mask.values())
    if (v != 0.0 && v != 1.0) throw PreconditionError("pair " + id + ": mask is not binary");
  if (backbone_ready && (height() % 32 != 0 || width() % 32 != 0)) {
    throw PreconditionError("pair " + id + ": extents must be divisible by 32");
  }
}

void SynthConfig::validate() const {
  if (height == 0 || width == 0) throw PreconditionError("synth: canvas must be non-empty");
  if (min_objects > max_objects) throw PreconditionError("synth: min_objects > max_objects");
  if (min_object_size == 0 || min_object_size > max_object_size) {
    throw PreconditionError("synth: object size range must be positive and ordered");
  }
  for (double f : {pseudo_fraction, change_fraction, rotated_fraction}) {
    if (!(f >= 0.0 && f <= 1.0)) throw PreconditionError("synth: fractions must lie in [0,1]");
  }
  if (!(brightness >= 0.0) || !(tint >= 0.0 && tint <= 1.0) || !(noise_sigma >= 0.0)) {
    throw PreconditionError("synth: noise ranges must be non-negative (tint <= 1)");
  }
}

SynthScene generate_scene(const SynthConfig& cfg, std::uint64_t index) {
  cfg.validate();
  std::mt19937_64 rng(derive_seed(cfg.seed, index));
  const std::size_t h = cfg.height, w = cfg.width;

  // Static textured ground shared by both acquisitions.
  Planar ground(3, h, w);
  std::array<double, 3> base{};
  for (auto& ch : base) ch = uniform(rng, 0.2, 0.45);
  struct Wave {
    double fx, fy, phase, amp;
  };
  std::array<Wave, 3> waves{};
  for (auto& wv : waves) {
    wv = {uniform(rng, 0.05, 0.4), uniform(rng, 0.05, 0.4), uniform(rng, 0.0, 2 * std::numbers::pi),
          uniform(rng, 0.01, 0.04)};
  }
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double tex = uniform(rng, -0.03, 0.03);
      for (const auto& wv : waves) tex += wv.amp * std::sin(wv.fx * x + wv.fy * y + wv.phase);
      for (std::size_t ch = 0; ch < 3; ++ch) ground.at(ch, y, x) = std::clamp(base[ch] + tex, 0.0, 1.0);
    }

  const std::size_t count =
      cfg.min_objects + static_cast<std::size_t>(uniform01(rng) * (cfg.max_objects - cfg.min_objects + 1));
  SynthScene scene;
  std::vector<std::array<double, 4>> boxes;  // x0, y0, x1, y1
  Planar img_a = ground, img_b = ground, mask(1, h, w);
  for (std::size_t n = 0; n < count; ++n) {
    SynthObject obj;
    const double pop = uniform01(rng);
    if (pop < cfg.pseudo_fraction) {
      obj.population = Population::Pseudo;
    } else if (uniform01(rng) < cfg.change_fraction) {
      obj.population = Population::Change;
      const bool appears = uniform01(rng) < 0.5;
      obj.in_a = !appears;
      obj.in_b = appears;
    }
    bool placed = false;
    for (std::size_t attempt = 0; attempt < kPlaceAttempts && !placed; ++attempt) {
      const auto span = static_cast<double>(cfg.max_object_size - cfg.min_object_size + 1);
      const double ow = cfg.min_object_size + std::floor(uniform01(rng) * span);
      const double oh = cfg.min_object_size + std::floor(uniform01(rng) * span);
      const bool rotated = uniform01(rng) < cfg.rotated_fraction;
      const double theta = rotated ? uniform(rng, 0.15, std::numbers::pi / 2 - 0.15) : 0.0;
      const double ex = 0.5 * (ow * std::abs(std::cos(theta)) + oh * std::abs(std::sin(theta)));
      const double ey = 0.5 * (ow * std::abs(std::sin(theta)) + oh * std::abs(std::cos(theta)));
      const double free_x = w - 2.0 * ex - 2.0, free_y = h - 2.0 * ey - 2.0;
      if (free_x < 0.0 || free_y < 0.0) continue;
      double cx = 1.0 + ex + uniform01(rng) * free_x;
      double cy = 1.0 + ey + uniform01(rng) * free_y;
      if (!rotated) {
        // Integer corners keep pixel centers off the edges.
        cx = std::floor(cx - ow / 2) + ow / 2;
        cy = std::floor(cy - oh / 2) + oh / 2;
      }
      const std::array<double, 4> box{cx - ex, cy - ey, cx + ex, cy + ey};
      const bool overlaps = std::any_of(boxes.begin(), boxes.end(), [&](const auto& o) {
        return box[0] < o[2] + kPlacementMargin && o[0] < box[2] + kPlacementMargin &&
               box[1] < o[3] + kPlacementMargin && o[1] < box[3] + kPlacementMargin;
      });
      if (overlaps) continue;
      const double c = std::cos(theta), s = std::sin(theta);
      const std::array<std::array<double, 2>, 4> local{{{-ow / 2, -oh / 2}, {ow / 2, -oh / 2}, {ow / 2, oh / 2},
                                                        {-ow / 2, oh / 2}}};
      for (std::size_t k = 0; k < 4; ++k) {
        obj.corners[k] = {cx + c * local[k][0] - s * local[k][1], cy + s * local[k][0] + c * local[k][1]};
      }
      boxes.push_back(box);
      placed = true;
    }
    if (!placed) {
      throw GenerationError("canvas " + std::to_string(w) + "x" + std::to_string(h) + " too small for " +
                            std::to_string(count) + " objects");
    }
    const Look look_a = random_look(rng);
    const Look look_b = obj.population == Population::Pseudo ? distinct_look(rng, look_a) : look_a;
    if (obj.in_a) paint(img_a, obj, look_a);
    if (obj.in_b) paint(img_b, obj, look_b);
    if (obj.population == Population::Change) {
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t col = 0; col < w; ++col)
          if (inside_convex(obj.corners, col + 0.5, r + 0.5)) mask.at(0, r, col) = 1.0;
    }
    scene.objects.push_back(obj);
  }

  photometric(img_a, rng, cfg);
  photometric(img_b, rng, cfg);
  scene.pair = assemble(img_a, img_b, mask, "synth_" + std::to_string(cfg.seed) + "_" + std::to_string(index));
  return scene;
}

BitemporalPair generate_pair(const SynthConfig& cfg, std::uint64_t index) { return generate_scene(cfg, index).pair; }

std::vector<BitemporalPair> tile(const BitemporalPair& pair, std::size_t tile_size) {
  pair.validate(false);
  if (tile_size == 0) throw PreconditionError("tile: tile size must be positive");
  if (tile_size > pair.height() || tile_size > pair.width()) {
    throw PreconditionError("tile: tile size " + std::to_string(tile_size) + " exceeds image " +
                            std::to_string(pair.height()) + "x" + std::to_string(pair.width()));
  }
  std::vector<BitemporalPair> tiles;
  const std::size_t rows = pair.height() / tile_size, cols = pair.width() / tile_size;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      auto t = crop(pair, r * tile_size, c * tile_size, tile_size, tile_size);
      t.id = pair.id + "_r" + std::to_string(r) + "_c" + std::to_string(c);
      tiles.push_back(std::move(t));
    }
  return tiles;
}

BitemporalPair hflip(const BitemporalPair& pair) {
  const std::size_t w = pair.width();
  return remap(
      pair, pair.height(), w, [w](std::size_t y, std::size_t x) { return std::pair{y, w - 1 - x}; }, pair.id);
}

BitemporalPair vflip(const BitemporalPair& pair) {
  const std::size_t h = pair.height();
  return remap(
      pair, h, pair.width(), [h](std::size_t y, std::size_t x) { return std::pair{h - 1 - y, x}; }, pair.id);
}

BitemporalPair rot90(const BitemporalPair& pair, int k) {
  k = ((k % 4) + 4) % 4;
  const std::size_t h = pair.height(), w = pair.width();
  switch (k) {
    case 1:  // counter-clockwise: out(y, x) = in(x, w - 1 - y)
      return remap(
          pair, w, h, [w](std::size_t y, std::size_t x) { return std::pair{x, w - 1 - y}; }, pair.id);
    case 2:
      return remap(
          pair, h, w, [h, w](std::size_t y, std::size_t x) { return std::pair{h - 1 - y, w - 1 - x}; }, pair.id);
    case 3:
      return remap(
          pair, w, h, [h](std::size_t y, std::size_t x) { return std::pair{h - 1 - x, y}; }, pair.id);
    default:
      return pair;
  }
}

BitemporalPair crop(const BitemporalPair& pair, std::size_t top, std::size_t left, std::size_t height,
                    std::size_t width) {
  if (height == 0 || width == 0 || top + height > pair.height() || left + width > pair.width()) {
    throw PreconditionError("crop: window outside the pair");
  }
  return remap(
      pair, height, width, [top, left](std::size_t y, std::size_t x) { return std::pair{top + y, left + x}; },
      pair.id);
}

BitemporalPair shift_brightness(const BitemporalPair& pair, double shift_a, double shift_b) {
  auto shifted = [](const Tensor& t, double s) {
    std::vector<double> v(t.values().begin(), t.values().end());
    for (auto& x : v) x = std::clamp(x + s, 0.0, 1.0);
    return Tensor::from(t.shape(), std::move(v));
  };
  return {shifted(pair.image_a, shift_a), shifted(pair.image_b, shift_b), pair.mask, pair.id};
}

BitemporalPair augment(const BitemporalPair& pair, const AugmentPolicy& policy, std::mt19937_64& rng) {
  if (policy.crop > pair.height() || policy.crop > pair.width()) {
    throw PreconditionError("augment: crop size exceeds pair size");
  }
  BitemporalPair out = pair;
  if (policy.hflip_prob > 0.0 && uniform01(rng) < policy.hflip_prob) out = hflip(out);
  if (policy.vflip_prob > 0.0 && uniform01(rng) < policy.vflip_prob) out = vflip(out);
  if (policy.rot90_prob > 0.0 && uniform01(rng) < policy.rot90_prob) {
    out = rot90(out, 1 + static_cast<int>(uniform01(rng) * 3));
  }
  if (policy.crop > 0) {
    const auto top = static_cast<std::size_t>(uniform01(rng) * (out.height() - policy.crop + 1));
    const auto left = static_cast<std::size_t>(uniform01(rng) * (out.width() - policy.crop + 1));
    out = crop(out, top, left, policy.crop, policy.crop);
  }
  if (policy.brightness > 0.0) {
    const double sa = uniform(rng, -policy.brightness, policy.brightness);
    const double sb = uniform(rng, -policy.brightness, policy.brightness);
    out = shift_brightness(out, sa, sb);
  }
  return out;
}

Tensor load_image(const std::filesystem::path& path, std::size_t channels) {
  return image_tensor(io::read_png(path, channels));
}

std::vector<BitemporalPair> load_dataset(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  const std::array<const char*, 3> subdirs{"A", "B", "label"};
  std::array<std::vector<std::string>, 3> names;
  for (std::size_t d = 0; d < 3; ++d) {
    const auto dir = root / subdirs[d];
    if (!fs::is_directory(dir)) throw DatasetError("dataset: missing directory " + dir.string());
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".png") {
        names[d].push_back(entry.path().filename().string());
      }
    }
    std::sort(names[d].begin(), names[d].end());
  }
  for (std::size_t d = 0; d < 3; ++d)
    for (const auto& n : names[d])
      for (std::size_t o = 0; o < 3; ++o)
        if (!std::binary_search(names[o].begin(), names[o].end(), n)) {
          throw DatasetError("dataset: " + (root / subdirs[d] / n).string() + " has no counterpart in " +
                             (root / subdirs[o]).string());
        }

  std::vector<BitemporalPair> pairs;
  for (const auto& n : names[0]) {
    try {
      const auto a = io::read_png(root / "A" / n, 3);
      const auto b = io::read_png(root / "B" / n, 3);
      const auto l = io::read_png(root / "label" / n, 1);
      if (a.width != b.width || a.height != b.height || a.width != l.width || a.height != l.height) {
        throw DatasetError("dataset: size mismatch for " + n);
      }
      std::vector<double> mask(l.pixels.size());
      for (std::size_t i = 0; i < mask.size(); ++i) {
        const auto px = l.pixels[i];
        if (px != 0 && px != 255) throw DatasetError("dataset: non-binary label " + (root / "label" / n).string());
        mask[i] = px ? 1.0 : 0.0;
      }
      BitemporalPair p;
      p.image_a = image_tensor(a);
      p.image_b = image_tensor(b);
      p.mask = Tensor::from({1, l.height, l.width}, std::move(mask));
      p.id = fs::path(n).stem().string();
      pairs.push_back(std::move(p));
    } catch (const io::ImageIoError& e) {
      throw DatasetError(std::string("dataset: ") + e.what());
    }
  }
  return pairs;
}

void save_pair(const std::filesystem::path& root, const BitemporalPair& pair) {
  namespace fs = std::filesystem;
  pair.validate(false);
  for (const char* d : {"A", "B", "label"}) fs::create_directories(root / d);
  const auto name = pair.id + ".png";
  io::write_png(root / "A" / name, image8(pair.image_a, 255.0));
  io::write_png(root / "B" / name, image8(pair.image_b, 255.0));
  io::write_png(root / "label" / name, image8(pair.mask, 255.0));
}

Batch make_batch(std::span<const BitemporalPair> pairs, std::span<const std::size_t> indices) {
  if (indices.empty()) throw PreconditionError("make_batch: empty batch");
  const auto& first = pairs[indices[0]];
  const std::size_t h = first.height(), w = first.width();
  std::vector<double> a, b, m;
  for (auto i : indices) {
    const auto& p = pairs[i];
    if (p.height() != h || p.width() != w) throw PreconditionError("make_batch: pairs differ in size");
    a.insert(a.end(), p.image_a.values().begin(), p.image_a.values().end());
    b.insert(b.end(), p.image_b.values().begin(), p.image_b.values().end());
    m.insert(m.end(), p.mask.values().begin(), p.mask.values().end());
  }
  const std::size_t n = indices.size();
  return {Tensor::from({n, 3, h, w}, std::move(a)), Tensor::from({n, 3, h, w}, std::move(b)),
          Tensor::from({n, 1, h, w}, std::move(m))};
}

}  // namespace fino::data
