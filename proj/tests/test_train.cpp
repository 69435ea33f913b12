#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "fino/checkpoint.hpp"
#include "fino/config.hpp"
#include "fino/grad_suite.hpp"
#include "fino/model.hpp"
#include "fino/ops.hpp"
#include "fino/optim.hpp"
#include "fino/trainer.hpp"
#include "support.hpp"

namespace fino::train {
namespace {

namespace fs = std::filesystem;

TEST(PolyLr, Endpoints) {
  EXPECT_EQ(poly_lr(0, 300, 0.001, 0.9), 0.001);
  EXPECT_EQ(poly_lr(300, 300, 0.001, 0.9), 0.0);
  EXPECT_DOUBLE_EQ(poly_lr(150, 300, 0.001, 1.0), 0.0005);
  EXPECT_THROW(poly_lr(301, 300, 0.001, 0.9), PreconditionError);
}

TEST(PolyLr, StrictlyDecreasing) {
  for (double power : {0.5, 0.9, 1.0, 2.0}) {
    double prev = poly_lr(0, 1000, 1e-3, power);
    for (std::uint64_t s = 1; s <= 1000; ++s) {
      const double cur = poly_lr(s, 1000, 1e-3, power);
      ASSERT_LT(cur, prev) << "power " << power << " step " << s;
      prev = cur;
    }
  }
}

TEST(AdamW, ZeroGradients) {
  std::vector<double> p{0.5, -2.0, 3.0};
  Moments m;
  adamw_step(p, std::vector<double>(3, 0.0), m, 0.1, 1, {0.0});
  EXPECT_EQ(p, (std::vector<double>{0.5, -2.0, 3.0}));
  const double lr = 0.1, d = 0.01;
  adamw_step(p, std::vector<double>(3, 0.0), m, lr, 2, {d});
  EXPECT_DOUBLE_EQ(p[0], 0.5 * (1 - lr * d));
  EXPECT_DOUBLE_EQ(p[1], -2.0 * (1 - lr * d));
}

TEST(AdamW, ScalarQuadraticMatchesReference) {
  const AdamWOptions o{};
  ParamStore params;
  params.add("w", Tensor::scalar(1.0, true));
  AdamW opt(o);
  // Reference: textbook decoupled AdamW on f(w) = w^2.
  double w = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 50; ++t) {
    params.zero_grad();
    const auto& x = params.get("w");
    ops::mul(x, x).backward();
    ASSERT_TRUE(opt.step(params, 0.1));

    const double g = 2.0 * w;
    m = o.beta1 * m + (1 - o.beta1) * g;
    v = o.beta2 * v + (1 - o.beta2) * g * g;
    const double mh = m / (1 - std::pow(o.beta1, t)), vh = v / (1 - std::pow(o.beta2, t));
    w = w - 0.1 * o.weight_decay * w - 0.1 * mh / (std::sqrt(vh) + o.eps);
    ASSERT_NEAR(params.get("w").item(), w, 1e-12) << "step " << t;
  }
  EXPECT_LT(std::abs(params.get("w").item()), 0.05);
}

TEST(AdamW, NonFiniteGradientSkipsStep) {
  ParamStore params;
  params.add("w", Tensor::from({2}, {1.0, 2.0}, true));
  auto& w = params.get("w");
  w.impl()->grad_buffer()[1] = std::numeric_limits<double>::quiet_NaN();
  AdamW opt;
  EXPECT_FALSE(opt.step(params, 0.1));
  EXPECT_EQ(opt.skipped(), 1u);
  EXPECT_EQ(opt.steps(), 0u);
  EXPECT_EQ(w.values()[0], 1.0);
}

TEST(Config, ParseAndRoundTrip) {
  const auto cfg = parse_config(R"(# comment
epochs = 7
batch_size=3
lr = 0.002   # trailing comment
lambda = 0
widths = 8, 12, 16, 20
stages = 4,3
bsa = off
rcl_polarity = literal
aug_crop = 32
)");
  EXPECT_EQ(cfg.epochs, 7u);
  EXPECT_EQ(cfg.batch_size, 3u);
  EXPECT_EQ(cfg.lr, 0.002);
  EXPECT_EQ(cfg.lambda, 0.0);
  EXPECT_EQ(cfg.model.backbone.widths[3], 20u);
  EXPECT_EQ(cfg.model.stages, (std::array<bool, 4>{false, false, true, true}));
  EXPECT_FALSE(cfg.model.use_bsa);
  EXPECT_EQ(cfg.model.polarity, bsa::RclPolarity::Literal);
  const auto again = parse_config(cfg.to_text());
  EXPECT_EQ(again.to_text(), cfg.to_text());
  EXPECT_EQ(again.hash(), cfg.hash());
  EXPECT_NE(TrainConfig{}.hash(), cfg.hash());
}

TEST(Config, Defaults) {
  const TrainConfig cfg;
  EXPECT_EQ(cfg.lr, 1e-3);
  EXPECT_EQ(cfg.poly_power, 0.9);
  EXPECT_EQ(cfg.weight_decay, 1e-4);
  EXPECT_EQ(cfg.lambda, 0.1);
  EXPECT_EQ(cfg.threshold, 0.5);
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Config, Errors) {
  try {
    parse_config("epochs = 3\nlearning_rate = 0.1\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
  }
  EXPECT_THROW(parse_config("epochs = -1"), ConfigError);
  EXPECT_THROW(parse_config("epochs"), ConfigError);
  EXPECT_THROW(parse_config("lr = abc"), ConfigError);
  EXPECT_THROW(parse_config("threshold = 1"), ConfigError);
  EXPECT_THROW(parse_config("aug_crop = 40"), ConfigError);
  EXPECT_THROW(parse_config("stages = 5"), ConfigError);
  EXPECT_THROW(parse_config("widths = 8,8,16,32"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.txt"), ConfigError);
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 2;
  cfg.model.backbone.widths = {4, 8, 12, 16};
  return cfg;
}

std::vector<data::BitemporalPair> tiny_dataset(std::size_t n, std::size_t side = 32, double pseudo = 0.0) {
  data::SynthConfig s;
  s.height = s.width = side;
  s.min_objects = 1;
  s.max_objects = 2;
  s.min_object_size = 4;
  s.max_object_size = 8;
  s.pseudo_fraction = pseudo;
  std::vector<data::BitemporalPair> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(data::generate_pair(s, i));
  return out;
}

data::Batch batch_of(const std::vector<data::BitemporalPair>& ds) {
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  return data::make_batch(ds, idx);
}

TEST(Model, ForwardShapesAndGateRange) {
  const auto cfg = tiny_config();
  ParamStore params;
  model::init_params(params, cfg.model, 1);
  const auto b = batch_of(tiny_dataset(2));
  const auto fwd = model::forward(b.image_a, b.image_b, params, cfg.model);
  EXPECT_EQ(fwd.output.prob.shape(), (Shape{2, 1, 32, 32}));
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& st = fwd.stages[i];
    ASSERT_TRUE(st.gate.has_value());
    for (double g : st.gate->values()) {
      EXPECT_GT(g, 0.0);
      EXPECT_LT(g, 2.0);
    }
    for (double m : st.shape->mask.values()) {
      EXPECT_GT(m, 0.0);
      EXPECT_LT(m, 1.0);
    }
    for (double d : st.change.distance.values()) EXPECT_GE(d, 0.0);
  }
  EXPECT_THROW(model::forward(Tensor::zeros({1, 3, 48, 32}), Tensor::zeros({1, 3, 48, 32}), params, cfg.model),
               PreconditionError);
}

TEST(Model, IdenticalImagesGiveZeroChangeFeatures) {
  const auto cfg = tiny_config();
  ParamStore params;
  model::init_params(params, cfg.model, 2);
  const auto b = batch_of(tiny_dataset(1));
  const auto fwd = model::forward(b.image_a, b.image_a, params, cfg.model);
  for (const auto& st : fwd.stages)
    for (double v : st.change.change.values()) EXPECT_EQ(v, 0.0);
}

TEST(Model, AblationFlags) {
  auto cfg = tiny_config();
  cfg.model.use_rega = false;
  cfg.model.stages = {false, false, true, true};
  cfg.model.gate.clamp = true;
  ParamStore params;
  model::init_params(params, cfg.model, 3);
  const auto b = batch_of(tiny_dataset(1));
  const auto fwd = model::forward(b.image_a, b.image_b, params, cfg.model);
  EXPECT_FALSE(fwd.stages[0].context.has_value());
  EXPECT_TRUE(fwd.stages[3].context.has_value());
  EXPECT_EQ(fwd.output.prob.shape(), (Shape{1, 1, 32, 32}));

  auto no_bsa = tiny_config();
  no_bsa.model.use_bsa = false;
  ParamStore p2;
  model::init_params(p2, no_bsa.model, 3);
  const auto f2 = model::forward(b.image_a, b.image_b, p2, no_bsa.model);
  const auto terms = model::component_losses(f2, b.mask, 0.1, no_bsa.model);
  EXPECT_EQ(terms.l_gcl.item(), 0.0);
  EXPECT_EQ(terms.l_sal.item(), 0.0);
}

TEST(Model, FullGraphGradCheck) {
  for (const auto& c : gradsuite::run("full")) {
    EXPECT_TRUE(c.report.passed) << c.name << " " << c.report.max_rel_error;
  }
}

TEST(Train, DeterministicLogsAndLambdaZero) {
  const auto ds = tiny_dataset(3);
  auto cfg = tiny_config();
  const auto a = train(cfg, ds), b = train(cfg, ds);
  ASSERT_EQ(a.log.size(), total_steps(cfg, ds.size()));
  EXPECT_EQ(a.log.size(), 6u);
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].to_json(), b.log[i].to_json());
    EXPECT_TRUE(std::isfinite(a.log[i].total));
    EXPECT_EQ(a.log[i].lr, poly_lr(i, a.log.size(), cfg.lr, cfg.poly_power));
  }
  EXPECT_GT(a.log[0].l_gcl + a.log[0].l_rcl, 0.0);

  cfg.lambda = 0.0;
  const auto z = train(cfg, ds);
  for (const auto& s : z.log) {
    EXPECT_EQ(s.l_gcl, 0.0);
    EXPECT_EQ(s.l_rcl, 0.0);
    EXPECT_EQ(s.total, s.l_cd + s.l_sal);
  }
}

TEST(Train, OverfitTraceIsFiniteAndSettles) {
  data::SynthConfig s;
  s.seed = 1;
  std::vector<data::BitemporalPair> ds;
  for (std::size_t i = 0; i < 8; ++i) ds.push_back(data::generate_pair(s, i));
  const auto result = train(TrainConfig{}, ds);
  ASSERT_EQ(result.log.size(), 300u);
  for (const auto& step : result.log) ASSERT_TRUE(std::isfinite(step.total)) << step.step;
  double prev = 0.0;
  for (std::size_t end = 20; end <= result.log.size(); ++end) {
    double avg = 0.0;
    for (std::size_t i = end - 20; i < end; ++i) avg += result.log[i].total;
    avg /= 20.0;
    if (end - 1 > 50) EXPECT_LE(avg, prev) << "20-step average rises at step " << end - 1;
    prev = avg;
  }
}

TEST(Train, StepLogJsonShape) {
  StepLog s{3, 0.5, 1, 2, 3, 4, 5};
  EXPECT_EQ(s.to_json(), R"({"step":3,"lr":0.5,"l_cd":1.0,"l_sal":2.0,"l_gcl":3.0,"l_rcl":4.0,"total":5.0})");
}

TEST(Train, Preconditions) {
  const auto cfg = tiny_config();
  EXPECT_THROW(train(cfg, {}), PreconditionError);
  auto mixed = tiny_dataset(1);
  mixed.push_back(tiny_dataset(1, 64)[0]);
  EXPECT_THROW(train(cfg, mixed), PreconditionError);
}

TEST(Train, AugmentedRunIsDeterministic) {
  auto cfg = tiny_config();
  cfg.epochs = 2;
  cfg.augment = {0.5, 0.5, 0.5, 0, 0.1};
  const auto ds = tiny_dataset(2);
  const auto a = train(cfg, ds), b = train(cfg, ds);
  for (std::size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(a.log[i].to_json(), b.log[i].to_json());
}

struct TempFile {
  fs::path path;
  explicit TempFile(const std::string& name) : path(fs::temp_directory_path() / ("fino_test_" + name)) {}
  ~TempFile() { fs::remove_all(path); }
};

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto ds = tiny_dataset(2);
  auto cfg = tiny_config();
  cfg.model.stages = {false, true, true, true};
  cfg.model.polarity = bsa::RclPolarity::Literal;
  const auto result = train(cfg, ds);
  TempFile f("ckpt.bin");
  save_checkpoint(f.path, result.checkpoint);
  const auto loaded = load_checkpoint(f.path);
  EXPECT_EQ(loaded.step, result.checkpoint.step);
  EXPECT_EQ(loaded.config_hash, cfg.hash());
  EXPECT_EQ(loaded.model.stages, cfg.model.stages);
  EXPECT_EQ(loaded.input_height, 32u);
  EXPECT_EQ(loaded.params.names(), result.checkpoint.params.names());
  EXPECT_EQ(loaded.moments.size(), result.checkpoint.moments.size());
  const auto b = batch_of(ds);
  const auto p0 = predict(result.checkpoint, b.image_a, b.image_b);
  const auto p1 = predict(loaded, b.image_a, b.image_b);
  ASSERT_EQ(p0.numel(), p1.numel());
  EXPECT_EQ(std::memcmp(p0.values().data(), p1.values().data(), p0.numel() * sizeof(double)), 0);

  // The file starts with the magic and version.
  std::ifstream in(f.path, std::ios::binary);
  char magic[4];
  std::uint32_t version = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), 4);
  EXPECT_EQ(std::string(magic, 4), "FINO");
  EXPECT_EQ(version, kCheckpointVersion);
}

TEST(Checkpoint, CorruptFilesRejected) {
  TempFile f("bad.bin");
  {
    std::ofstream out(f.path, std::ios::binary);
    out << "NOPE";
  }
  EXPECT_THROW(load_checkpoint(f.path), CheckpointError);
  EXPECT_THROW(load_checkpoint(f.path.string() + ".missing"), CheckpointError);

  const auto ds = tiny_dataset(1);
  auto cfg = tiny_config();
  cfg.epochs = 1;
  save_checkpoint(f.path, train(cfg, ds).checkpoint);
  const auto size = fs::file_size(f.path);
  fs::resize_file(f.path, size - 5);
  EXPECT_THROW(load_checkpoint(f.path), CheckpointError);
}

TEST(Evaluate, EmptyMasksAtHighThresholdArePerfect) {
  auto cfg = tiny_config();
  cfg.epochs = 1;
  auto ds = tiny_dataset(2);
  const auto ckpt = train(cfg, ds).checkpoint;
  for (auto& p : ds) p.mask = Tensor::zeros(p.mask.shape());
  const auto r = evaluate(ckpt, ds, 1.0 - 1e-9);
  EXPECT_EQ(r.counts.tp + r.counts.fp + r.counts.fn, 0u);
  EXPECT_EQ(r.precision, 1.0);
  EXPECT_EQ(r.recall, 1.0);
}

TEST(Evaluate, DeterministicAndDumpsMasks) {
  auto cfg = tiny_config();
  cfg.epochs = 1;
  const auto ds = tiny_dataset(2);
  const auto ckpt = train(cfg, ds).checkpoint;
  TempFile dir("dump");
  const auto a = evaluate(ckpt, ds, 0.5, dir.path);
  const auto b = evaluate(ckpt, ds, 0.5);
  EXPECT_EQ(metrics::to_json(a), metrics::to_json(b));
  EXPECT_EQ(a.counts.tp + a.counts.fp + a.counts.fn + a.counts.tn, 2u * 32 * 32);
  for (const auto& p : ds) EXPECT_TRUE(fs::exists(dir.path / (p.id + ".png")));
  const auto mask = data::load_image(dir.path / (ds[0].id + ".png"), 1);
  for (double v : mask.values()) EXPECT_TRUE(v == 0.0 || v == 1.0);

  EXPECT_THROW(evaluate(ckpt, tiny_dataset(1, 64), 0.5), PreconditionError);
  EXPECT_THROW(evaluate(ckpt, ds, 1.0), PreconditionError);
}

}  // namespace
}  // namespace fino::train
