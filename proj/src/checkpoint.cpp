#include "fino/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace fino::train {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'F', 'I', 'N', 'O'};
constexpr std::uint8_t kDtypeF64 = 1;
constexpr std::size_t kModelMetaSize = 25;

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in, const std::string& what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw CheckpointError("checkpoint: truncated while reading " + what);
  return v;
}

void put_record(std::ostream& out, const std::string& name, const Shape& shape, std::span<const double> values) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put<std::uint8_t>(out, kDtypeF64);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
  for (auto e : shape) put<std::uint64_t>(out, e);
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
}

struct Record {
  Shape shape;
  std::vector<double> values;
};

std::vector<double> encode_model(const Checkpoint& c) {
  const auto& m = c.model;
  std::vector<double> v;
  v.push_back(static_cast<double>(m.backbone.in_channels));
  v.push_back(static_cast<double>(m.backbone.stem_stride));
  for (auto b : m.backbone.blocks) v.push_back(static_cast<double>(b));
  for (auto w : m.backbone.widths) v.push_back(static_cast<double>(w));
  v.push_back(m.backbone.norm == backbone::NormKind::Group ? 1.0 : 0.0);
  v.push_back(static_cast<double>(m.backbone.norm_groups));
  v.push_back(static_cast<double>(m.attention.region));
  v.push_back(m.attention.enabled ? 1.0 : 0.0);
  v.push_back(m.use_bsa ? 1.0 : 0.0);
  v.push_back(m.use_rega ? 1.0 : 0.0);
  for (bool s : m.stages) v.push_back(s ? 1.0 : 0.0);
  v.push_back(m.gate.use_shape_mask ? 1.0 : 0.0);
  v.push_back(m.gate.clamp ? 1.0 : 0.0);
  v.push_back(m.polarity == bsa::RclPolarity::Literal ? 1.0 : 0.0);
  v.push_back(static_cast<double>(c.input_height));
  v.push_back(static_cast<double>(c.input_width));
  return v;
}

void decode_model(const std::vector<double>& v, Checkpoint& c) {
  if (v.size() != kModelMetaSize) throw CheckpointError("checkpoint: meta.model has the wrong size");
  std::size_t k = 0;
  auto next = [&] { return static_cast<std::size_t>(v[k++]); };
  auto& m = c.model;
  m.backbone.in_channels = next();
  m.backbone.stem_stride = next();
  for (auto& b : m.backbone.blocks) b = next();
  for (auto& w : m.backbone.widths) w = next();
  m.backbone.norm = next() ? backbone::NormKind::Group : backbone::NormKind::None;
  m.backbone.norm_groups = next();
  m.attention.region = next();
  m.attention.enabled = next() != 0;
  m.use_bsa = next() != 0;
  m.use_rega = next() != 0;
  for (auto& s : m.stages) s = next() != 0;
  m.gate.use_shape_mask = next() != 0;
  m.gate.clamp = next() != 0;
  m.polarity = next() ? bsa::RclPolarity::Literal : bsa::RclPolarity::AlignUnchanged;
  c.input_height = next();
  c.input_width = next();
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("checkpoint: cannot write " + path.string());
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);

  const std::vector<double> step{static_cast<double>(ckpt.step)};
  put_record(out, "meta.step", {1}, step);
  const std::vector<double> hash{static_cast<double>(ckpt.config_hash >> 32),
                                 static_cast<double>(ckpt.config_hash & 0xffffffffULL)};
  put_record(out, "meta.config_hash", {2}, hash);
  const auto model = encode_model(ckpt);
  put_record(out, "meta.model", {model.size()}, model);

  for (const auto& [name, t] : ckpt.params) put_record(out, name, t.shape(), t.values());
  for (const auto& [name, mom] : ckpt.moments) {
    put_record(out, "opt.m." + name, {mom.m.size()}, mom.m);
    put_record(out, "opt.v." + name, {mom.v.size()}, mom.v);
  }
  if (!out) throw CheckpointError("checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw CheckpointError("checkpoint: bad magic in " + path.string());
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  }

  std::map<std::string, Record> records;
  std::vector<std::string> order;
  while (in.peek() != std::char_traits<char>::eof()) {
    const auto len = get<std::uint32_t>(in, "name length");
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (!in) throw CheckpointError("checkpoint: truncated name");
    const auto dtype = get<std::uint8_t>(in, name + " dtype");
    if (dtype != kDtypeF64) throw CheckpointError("checkpoint: " + name + " has unknown dtype tag");
    const auto rank = get<std::uint32_t>(in, name + " rank");
    Record r;
    for (std::uint32_t d = 0; d < rank; ++d) r.shape.push_back(get<std::uint64_t>(in, name + " extents"));
    r.values.resize(shape_numel(r.shape));
    in.read(reinterpret_cast<char*>(r.values.data()), static_cast<std::streamsize>(r.values.size() * sizeof(double)));
    if (!in) throw CheckpointError("checkpoint: truncated values for " + name);
    if (!records.emplace(name, std::move(r)).second) throw CheckpointError("checkpoint: duplicate entry " + name);
    order.push_back(name);
  }

  Checkpoint c;
  auto take = [&](const std::string& name) -> Record& {
    auto it = records.find(name);
    if (it == records.end()) throw CheckpointError("checkpoint: missing " + name);
    return it->second;
  };
  c.step = static_cast<std::uint64_t>(take("meta.step").values.at(0));
  const auto& h = take("meta.config_hash").values;
  if (h.size() != 2) throw CheckpointError("checkpoint: meta.config_hash has the wrong size");
  c.config_hash = (static_cast<std::uint64_t>(h[0]) << 32) | static_cast<std::uint64_t>(h[1]);
  decode_model(take("meta.model").values, c);

  for (const auto& name : order) {
    if (name.starts_with("meta.") || name.starts_with("opt.")) continue;
    auto& r = records[name];
    c.params.add(name, Tensor::from(r.shape, std::move(r.values)));
  }
  for (const auto& name : order) {
    if (!name.starts_with("opt.m.")) continue;
    const auto pname = name.substr(6);
    Moments mom;
    mom.m = std::move(records[name].values);
    mom.v = std::move(take("opt.v." + pname).values);
    c.moments.emplace(pname, std::move(mom));
  }
  return c;
}

}  // namespace fino::train
