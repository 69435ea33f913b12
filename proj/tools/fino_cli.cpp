#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "fino/checkpoint.hpp"
#include "fino/config.hpp"
#include "fino/data.hpp"
#include "fino/grad_suite.hpp"
#include "fino/image_io.hpp"
#include "fino/ops.hpp"
#include "fino/trainer.hpp"

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitNumeric = 2;

int cmd_generate(const std::string& out, std::size_t count, std::size_t size, double pseudo_frac, double brightness,
                 std::uint64_t seed) {
  fino::data::SynthConfig cfg;
  cfg.height = cfg.width = size;
  cfg.pseudo_fraction = pseudo_frac;
  cfg.brightness = brightness;
  cfg.seed = seed;
  cfg.validate();
  for (std::size_t i = 0; i < count; ++i) fino::data::save_pair(out, fino::data::generate_pair(cfg, i));
  std::cerr << "wrote " << count << " pairs to " << out << "\n";
  return 0;
}

int cmd_train(const std::string& data_dir, const std::string& config_path, const std::string& out,
              const std::string& log_path) {
  const auto cfg = config_path.empty() ? fino::train::TrainConfig{} : fino::train::load_config(config_path);
  cfg.validate();
  const auto dataset = fino::data::load_dataset(data_dir);
  std::ofstream log_file;
  if (!log_path.empty()) {
    log_file.open(log_path, std::ios::trunc);
    if (!log_file) throw fino::PreconditionError("train: cannot write log " + log_path);
  }
  auto on_step = [&](const fino::train::StepLog& s) {
    const auto line = s.to_json();
    std::cout << line << "\n";
    if (log_file) log_file << line << "\n";
  };
  try {
    const auto result = fino::train::train(cfg, dataset, on_step);
    fino::train::save_checkpoint(out, result.checkpoint);
    std::cerr << "trained " << result.log.size() << " steps (" << result.skipped_steps << " skipped), saved " << out
              << "\n";
  } catch (const fino::train::TrainingDiverged& e) {
    fino::train::save_checkpoint(out, e.last_good());
    std::cerr << "error: " << e.what() << "\nsaved last good checkpoint to " << out << "\n";
    return kExitNumeric;
  }
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir, double threshold, const std::string& dump) {
  const auto ckpt = fino::train::load_checkpoint(ckpt_path);
  const auto dataset = fino::data::load_dataset(data_dir);
  std::optional<std::filesystem::path> dump_dir;
  if (!dump.empty()) dump_dir = dump;
  const auto report = fino::train::evaluate(ckpt, dataset, threshold, dump_dir);
  std::cout << fino::metrics::to_json(report) << "\n";
  return 0;
}

int cmd_predict(const std::string& ckpt_path, const std::string& a_path, const std::string& b_path,
                const std::string& out, double threshold) {
  const auto ckpt = fino::train::load_checkpoint(ckpt_path);
  const auto a = fino::data::load_image(a_path, 3);
  const auto b = fino::data::load_image(b_path, 3);
  if (a.shape() != b.shape()) throw fino::PreconditionError("predict: images differ in size");
  const std::size_t h = a.dim(1), w = a.dim(2);
  if (h != ckpt.input_height || w != ckpt.input_width) {
    throw fino::PreconditionError("predict: images are " + std::to_string(h) + "x" + std::to_string(w) +
                                  " but the model was trained on " + std::to_string(ckpt.input_height) + "x" +
                                  std::to_string(ckpt.input_width));
  }
  const auto prob = fino::train::predict(ckpt, fino::ops::reshape(a, {1, 3, h, w}), fino::ops::reshape(b, {1, 3, h, w}));
  const auto mask = fino::head::decide(prob, threshold);
  fino::io::Image8 img{w, h, 1, {}};
  img.pixels.reserve(h * w);
  for (double v : mask.values()) img.pixels.push_back(v > 0.5 ? 255 : 0);
  fino::io::write_png(out, img);
  return 0;
}

int cmd_gradcheck(const std::string& module) {
  std::vector<std::string> modules;
  if (module == "all") modules = fino::gradsuite::modules();
  else modules = {module};
  bool ok = true;
  double worst = 0.0;
  const auto start = std::chrono::steady_clock::now();
  for (const auto& m : modules) {
    for (const auto& c : fino::gradsuite::run(m)) {
      std::printf("%-4s %-9s %-36s max_rel_err=%.3e kinks=%zu\n", c.report.passed ? "PASS" : "FAIL",
                  c.module.c_str(), c.name.c_str(), c.report.max_rel_error, c.report.kink_probes);
      if (!c.report.passed) {
        for (const auto& e : c.report.entries) {
          if (e.passed) continue;
          std::printf("     %s[%zu]: analytic=%.10e numeric=%.10e\n", e.name.c_str(), e.worst_index, e.worst_analytic,
                      e.worst_numeric);
        }
      }
      ok = ok && c.report.passed;
      worst = std::max(worst, c.report.max_rel_error);
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("%s overall max_rel_err=%.3e in %.1fs\n", ok ? "PASS" : "FAIL", worst, secs);
  return ok ? 0 : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bitemporal change detection: data generation, training, evaluation"};
  app.require_subcommand(1);

  std::string out, data_dir, config_path, ckpt, log_path, dump, a_path, b_path, module = "all";
  std::size_t count = 8, size = 64;
  double pseudo_frac = 0.0, brightness = 0.0, threshold = 0.5;
  std::uint64_t seed = 0;

  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset as <out>/{A,B,label}/<id>.png");
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--count", count, "Number of pairs");
  gen->add_option("--size", size, "Square image side");
  gen->add_option("--pseudo-frac", pseudo_frac, "Share of pseudo-change objects");
  gen->add_option("--brightness", brightness, "Per-image brightness shift range");
  gen->add_option("--seed", seed, "Generator seed");

  auto* tr = app.add_subcommand("train", "Train on a dataset directory; one JSON object per step on stdout");
  tr->add_option("--data", data_dir, "Dataset root")->required();
  tr->add_option("--config", config_path, "key = value config file");
  tr->add_option("--out", out, "Checkpoint path")->required();
  tr->add_option("--log", log_path, "Also write the JSON-lines log here");

  auto* ev = app.add_subcommand("eval", "Metrics JSON over a dataset");
  ev->add_option("--ckpt", ckpt, "Checkpoint")->required();
  ev->add_option("--data", data_dir, "Dataset root")->required();
  ev->add_option("--threshold", threshold, "Decision threshold in (0,1)");
  ev->add_option("--dump-masks", dump, "Write predicted masks here");

  auto* pr = app.add_subcommand("predict", "Predict one change mask");
  pr->add_option("--ckpt", ckpt, "Checkpoint")->required();
  pr->add_option("--a", a_path, "First image")->required();
  pr->add_option("--b", b_path, "Second image")->required();
  pr->add_option("--out", out, "Output mask PNG")->required();
  pr->add_option("--threshold", threshold, "Decision threshold in (0,1)");

  auto* gc = app.add_subcommand("gradcheck", "Compare analytic gradients with central differences");
  gc->add_option("--module", module, "ops, backbone, cdl, bsa, head, full or all");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*gen) return cmd_generate(out, count, size, pseudo_frac, brightness, seed);
    if (*tr) return cmd_train(data_dir, config_path, out, log_path);
    if (*ev) return cmd_eval(ckpt, data_dir, threshold, dump);
    if (*pr) return cmd_predict(ckpt, a_path, b_path, out, threshold);
    if (*gc) return cmd_gradcheck(module);
  } catch (const fino::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return 0;
}
