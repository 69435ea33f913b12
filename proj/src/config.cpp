#include "fino/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace fino::train {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& what) {
  throw ConfigError("config: " + key + " = '" + value + "': " + what);
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (v.empty() || ec != std::errc{} || p != end) bad_value(key, v, "expected a non-negative integer");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (v.empty() || ec != std::errc{} || p != end || !std::isfinite(out)) bad_value(key, v, "expected a finite number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  bad_value(key, v, "expected true/false");
}

std::array<std::size_t, backbone::kStages> parse_quad(const std::string& key, const std::string& v) {
  const auto items = split_list(v);
  if (items.size() != backbone::kStages) bad_value(key, v, "expected four comma-separated integers");
  std::array<std::size_t, backbone::kStages> out{};
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = parse_uint(key, items[i]);
  return out;
}

std::string fmt_real(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

template <class A>
std::string fmt_list(const A& a) {
  std::string out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(a[i]);
  }
  return out;
}

using Setter = std::function<void(TrainConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto uint_field = [](auto member) {
      return [member](TrainConfig& c, const std::string& k, const std::string& v) {
        c.*member = static_cast<std::remove_reference_t<decltype(c.*member)>>(parse_uint(k, v));
      };
    };
    auto real_field = [](double TrainConfig::*member) {
      return [member](TrainConfig& c, const std::string& k, const std::string& v) { c.*member = parse_real(k, v); };
    };
    t["epochs"] = uint_field(&TrainConfig::epochs);
    t["batch_size"] = uint_field(&TrainConfig::batch_size);
    t["seed"] = uint_field(&TrainConfig::seed);
    t["lr"] = real_field(&TrainConfig::lr);
    t["poly_power"] = real_field(&TrainConfig::poly_power);
    t["weight_decay"] = real_field(&TrainConfig::weight_decay);
    t["beta1"] = real_field(&TrainConfig::beta1);
    t["beta2"] = real_field(&TrainConfig::beta2);
    t["adam_eps"] = real_field(&TrainConfig::adam_eps);
    t["lambda"] = real_field(&TrainConfig::lambda);
    t["threshold"] = real_field(&TrainConfig::threshold);

    t["aug_hflip"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.augment.hflip_prob = parse_real(k, v);
    };
    t["aug_vflip"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.augment.vflip_prob = parse_real(k, v);
    };
    t["aug_rot90"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.augment.rot90_prob = parse_real(k, v);
    };
    t["aug_crop"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.augment.crop = parse_uint(k, v);
    };
    t["aug_brightness"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.augment.brightness = parse_real(k, v);
    };

    t["widths"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.model.backbone.widths = parse_quad(k, v);
    };
    t["blocks"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.model.backbone.blocks = parse_quad(k, v);
    };
    t["stem_stride"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.model.backbone.stem_stride = parse_uint(k, v);
    };
    t["norm"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      if (v == "none") c.model.backbone.norm = backbone::NormKind::None;
      else if (v == "group") c.model.backbone.norm = backbone::NormKind::Group;
      else bad_value(k, v, "expected none or group");
    };
    t["norm_groups"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.model.backbone.norm_groups = parse_uint(k, v);
    };
    t["region"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.model.attention.region = parse_uint(k, v);
    };
    t["cdl"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.model.attention.enabled = parse_bool(k, v);
    };
    t["bsa"] = [](TrainConfig& c, const std::string& k, const std::string& v) { c.model.use_bsa = parse_bool(k, v); };
    t["rega"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.model.use_rega = parse_bool(k, v);
    };
    t["stages"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      std::array<bool, backbone::kStages> on{};
      for (const auto& item : split_list(v)) {
        const auto s = parse_uint(k, item);
        if (s < 1 || s > backbone::kStages) bad_value(k, v, "stage numbers are 1..4");
        if (on[s - 1]) bad_value(k, v, "stage listed twice");
        on[s - 1] = true;
      }
      c.model.stages = on;
    };
    t["rcl_polarity"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      if (v == "align_unchanged") c.model.polarity = bsa::RclPolarity::AlignUnchanged;
      else if (v == "literal") c.model.polarity = bsa::RclPolarity::Literal;
      else bad_value(k, v, "expected align_unchanged or literal");
    };
    t["gate_clamp"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.model.gate.clamp = parse_bool(k, v);
    };
    t["gate_mask"] = [](TrainConfig& c, const std::string& k, const std::string& v) {
      c.model.gate.use_shape_mask = parse_bool(k, v);
    };
    return t;
  }();
  return table;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("config: epochs must be positive");
  if (batch_size == 0) throw ConfigError("config: batch_size must be positive");
  if (!(lr > 0.0)) throw ConfigError("config: lr must be positive");
  if (!(poly_power > 0.0)) throw ConfigError("config: poly_power must be positive");
  if (weight_decay < 0.0) throw ConfigError("config: weight_decay must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("config: betas must lie in [0,1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("config: adam_eps must be positive");
  if (lambda < 0.0) throw ConfigError("config: lambda must be non-negative");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("config: threshold must lie in (0,1)");
  for (double p : {augment.hflip_prob, augment.vflip_prob, augment.rot90_prob}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("config: augmentation probabilities must lie in [0,1]");
  }
  if (augment.brightness < 0.0) throw ConfigError("config: aug_brightness must be non-negative");
  if (augment.crop % 32 != 0) throw ConfigError("config: aug_crop must be a multiple of 32");
  try {
    model.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const PreconditionError& e) {
    throw ConfigError(e.what());
  }
}

std::string TrainConfig::to_text() const {
  std::ostringstream out;
  out << "epochs = " << epochs << "\n";
  out << "batch_size = " << batch_size << "\n";
  out << "lr = " << fmt_real(lr) << "\n";
  out << "poly_power = " << fmt_real(poly_power) << "\n";
  out << "weight_decay = " << fmt_real(weight_decay) << "\n";
  out << "beta1 = " << fmt_real(beta1) << "\n";
  out << "beta2 = " << fmt_real(beta2) << "\n";
  out << "adam_eps = " << fmt_real(adam_eps) << "\n";
  out << "seed = " << seed << "\n";
  out << "lambda = " << fmt_real(lambda) << "\n";
  out << "threshold = " << fmt_real(threshold) << "\n";
  out << "aug_hflip = " << fmt_real(augment.hflip_prob) << "\n";
  out << "aug_vflip = " << fmt_real(augment.vflip_prob) << "\n";
  out << "aug_rot90 = " << fmt_real(augment.rot90_prob) << "\n";
  out << "aug_crop = " << augment.crop << "\n";
  out << "aug_brightness = " << fmt_real(augment.brightness) << "\n";
  out << "widths = " << fmt_list(model.backbone.widths) << "\n";
  out << "blocks = " << fmt_list(model.backbone.blocks) << "\n";
  out << "stem_stride = " << model.backbone.stem_stride << "\n";
  out << "norm = " << (model.backbone.norm == backbone::NormKind::Group ? "group" : "none") << "\n";
  out << "norm_groups = " << model.backbone.norm_groups << "\n";
  out << "region = " << model.attention.region << "\n";
  out << "cdl = " << (model.attention.enabled ? "true" : "false") << "\n";
  out << "bsa = " << (model.use_bsa ? "true" : "false") << "\n";
  out << "rega = " << (model.use_rega ? "true" : "false") << "\n";
  std::string stages;
  for (std::size_t s = backbone::kStages; s >= 1; --s) {
    if (!model.stages[s - 1]) continue;
    if (!stages.empty()) stages += ",";
    stages += std::to_string(s);
  }
  out << "stages = " << stages << "\n";
  out << "rcl_polarity = " << (model.polarity == bsa::RclPolarity::Literal ? "literal" : "align_unchanged") << "\n";
  out << "gate_clamp = " << (model.gate.clamp ? "true" : "false") << "\n";
  out << "gate_mask = " << (model.gate.use_shape_mask ? "true" : "false") << "\n";
  return out.str();
}

std::uint64_t TrainConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_text()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

TrainConfig parse_config(std::string_view text) {
  TrainConfig cfg;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const auto key = trim(std::string_view(body).substr(0, eq));
    const auto value = trim(std::string_view(body).substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) {
      throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    it->second(cfg, key, value);
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace fino::train
