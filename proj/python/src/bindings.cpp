#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fino/checkpoint.hpp"
#include "fino/config.hpp"
#include "fino/data.hpp"
#include "fino/grad_suite.hpp"
#include "fino/metrics.hpp"
#include "fino/ops.hpp"
#include "fino/optim.hpp"
#include "fino/trainer.hpp"

namespace py = pybind11;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_numpy(const fino::Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

fino::Tensor from_numpy(const Array& a) {
  fino::Shape shape(a.shape(), a.shape() + a.ndim());
  return fino::Tensor::from(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

py::dict report_dict(const fino::metrics::MetricsReport& r) {
  py::dict d;
  d["tp"] = r.counts.tp;
  d["fp"] = r.counts.fp;
  d["fn"] = r.counts.fn;
  d["tn"] = r.counts.tn;
  d["precision"] = r.precision;
  d["recall"] = r.recall;
  d["f1"] = r.f1;
  d["iou"] = r.iou;
  return d;
}

py::dict step_dict(const fino::train::StepLog& s) {
  py::dict d;
  d["step"] = s.step;
  d["lr"] = s.lr;
  d["l_cd"] = s.l_cd;
  d["l_sal"] = s.l_sal;
  d["l_gcl"] = s.l_gcl;
  d["l_rcl"] = s.l_rcl;
  d["total"] = s.total;
  return d;
}

}  // namespace

PYBIND11_MODULE(_fino, m) {
  m.doc() = "Change detection core: synthetic data, training, evaluation and gradient checks.";

  py::register_exception<fino::NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def(
      "generate_pair",
      [](std::size_t size, std::uint64_t index, std::uint64_t seed, double pseudo_fraction, double brightness) {
        fino::data::SynthConfig cfg;
        cfg.height = cfg.width = size;
        cfg.seed = seed;
        cfg.pseudo_fraction = pseudo_fraction;
        cfg.brightness = brightness;
        const auto p = fino::data::generate_pair(cfg, index);
        py::dict d;
        d["image_a"] = to_numpy(p.image_a);
        d["image_b"] = to_numpy(p.image_b);
        d["mask"] = to_numpy(p.mask);
        d["id"] = p.id;
        return d;
      },
      py::arg("size") = 64, py::arg("index") = 0, py::arg("seed") = 0, py::arg("pseudo_fraction") = 0.0,
      py::arg("brightness") = 0.0, "One synthetic pair as float64 arrays: images [3,H,W] and mask [1,H,W].");

  m.def(
      "write_dataset",
      [](const std::string& root, std::size_t count, std::size_t size, std::uint64_t seed, double pseudo_fraction,
         double brightness) {
        fino::data::SynthConfig cfg;
        cfg.height = cfg.width = size;
        cfg.seed = seed;
        cfg.pseudo_fraction = pseudo_fraction;
        cfg.brightness = brightness;
        for (std::size_t i = 0; i < count; ++i) fino::data::save_pair(root, fino::data::generate_pair(cfg, i));
      },
      py::arg("root"), py::arg("count"), py::arg("size") = 64, py::arg("seed") = 0, py::arg("pseudo_fraction") = 0.0,
      py::arg("brightness") = 0.0);

  m.def(
      "confusion",
      [](const Array& pred, const Array& gt) {
        return report_dict(fino::metrics::metrics(fino::metrics::confusion(from_numpy(pred), from_numpy(gt))));
      },
      py::arg("pred"), py::arg("gt"), "Counts and ratios for two binary masks of equal shape.");
  m.def(
      "metrics",
      [](std::uint64_t tp, std::uint64_t fp, std::uint64_t fn, std::uint64_t tn) {
        return report_dict(fino::metrics::metrics({tp, fp, fn, tn}));
      },
      py::arg("tp"), py::arg("fp"), py::arg("fn"), py::arg("tn"));

  m.def("poly_lr", &fino::train::poly_lr, py::arg("step"), py::arg("total_steps"), py::arg("base_lr") = 1e-3,
        py::arg("power") = 0.9);

  m.def(
      "canonical_config", [](const std::string& text) { return fino::train::parse_config(text).to_text(); },
      py::arg("text") = "", "Parse `key = value` text and return its canonical rendering.");

  m.def(
      "train",
      [](const std::string& data_dir, const std::string& config_text, const std::string& out) {
        const auto cfg = fino::train::parse_config(config_text);
        const auto dataset = fino::data::load_dataset(data_dir);
        fino::train::TrainResult result;
        {
          py::gil_scoped_release release;
          result = fino::train::train(cfg, dataset);
        }
        if (!out.empty()) fino::train::save_checkpoint(out, result.checkpoint);
        py::list log;
        for (const auto& s : result.log) log.append(step_dict(s));
        return log;
      },
      py::arg("data_dir"), py::arg("config") = "", py::arg("out") = "",
      "Train on root/{A,B,label}; returns the per-step loss log and optionally saves a checkpoint.");

  m.def(
      "evaluate",
      [](const std::string& ckpt_path, const std::string& data_dir, double threshold) {
        const auto ckpt = fino::train::load_checkpoint(ckpt_path);
        return report_dict(fino::train::evaluate(ckpt, fino::data::load_dataset(data_dir), threshold));
      },
      py::arg("checkpoint"), py::arg("data_dir"), py::arg("threshold") = 0.5);

  m.def(
      "predict",
      [](const std::string& ckpt_path, const Array& image_a, const Array& image_b) {
        if (image_a.ndim() != 3 || image_a.shape(0) != 3) throw std::invalid_argument("predict: images must be [3,H,W]");
        const auto ckpt = fino::train::load_checkpoint(ckpt_path);
        auto a = from_numpy(image_a), b = from_numpy(image_b);
        const std::size_t h = a.dim(1), w = a.dim(2);
        const auto prob = fino::train::predict(ckpt, fino::ops::reshape(a, {1, 3, h, w}),
                                               fino::ops::reshape(b, {1, 3, h, w}));
        return to_numpy(fino::ops::reshape(prob, {h, w}));
      },
      py::arg("checkpoint"), py::arg("image_a"), py::arg("image_b"), "Change probabilities [H,W].");

  m.def(
      "gradcheck",
      [](const std::string& module) {
        py::list out;
        for (const auto& c : fino::gradsuite::run(module)) {
          py::dict d;
          d["module"] = c.module;
          d["name"] = c.name;
          d["passed"] = c.report.passed;
          d["max_rel_error"] = c.report.max_rel_error;
          out.append(d);
        }
        return out;
      },
      py::arg("module"));
  m.attr("gradcheck_modules") = fino::gradsuite::modules();
}
