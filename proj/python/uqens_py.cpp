#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "uqens/bayes.hpp"
#include "uqens/config.hpp"
#include "uqens/data.hpp"
#include "uqens/ensemble.hpp"
#include "uqens/eval.hpp"
#include "uqens/layers.hpp"
#include "uqens/pipeline.hpp"
#include "uqens/tree.hpp"

namespace py = pybind11;
using namespace uqens;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.raw(), t.raw() + t.size(), out.mutable_data());
  return out;
}

Padding parse_padding(const std::string& p) {
  if (p == "same") return Padding::same;
  if (p == "valid") return Padding::valid;
  throw std::invalid_argument("padding must be 'same' or 'valid', got '" + p + "'");
}

py::dict report_dict(const MetricReport& r) {
  py::dict d;
  const std::pair<const char*, std::optional<double>> fields[] = {
      {"acc", r.acc}, {"sens", r.sens}, {"spec", r.spec}, {"prec", r.prec},
      {"auc", r.auc_balanced}, {"f1", r.f1}, {"roc_auc", r.roc_auc}, {"kappa", r.kappa}};
  for (const auto& [name, value] : fields) d[name] = value ? py::cast(*value) : py::none();
  return d;
}

RunConfig resolve(const std::optional<std::filesystem::path>& config, std::optional<std::uint64_t> seed,
                  const std::optional<std::filesystem::path>& out, const std::string& scale) {
  RunConfig c = RunConfig::preset(parse_scale(scale));
  if (config) c = load_run_config(*config, c);
  if (seed) c.seed = *seed;
  if (out) c.out = *out;
  return c;
}

}  // namespace

PYBIND11_MODULE(_uqens, m) {
  m.doc() = "Uncertainty-weighted ensembles of Monte Carlo dropout networks";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def(
      "conv2d",
      [](const Array& x, const Array& w, const Array& b, const std::string& padding) {
        return to_array(conv2d(to_tensor(x), KernelBank{to_tensor(w), to_tensor(b)}, parse_padding(padding)));
      },
      py::arg("x"), py::arg("weights"), py::arg("bias"), py::arg("padding") = "same",
      "True 2-D convolution of an H x W x C array with P x Q x C x K filters.");

  m.def("standardize", [](const Array& img) { return to_array(standardize(to_tensor(img))); });
  m.def("resize", [](const Array& img, std::size_t side) { return to_array(resize(to_tensor(img), side)); });

  m.def(
      "ensemble_scores",
      [](const std::vector<std::vector<double>>& member_uncertainties) {
        std::vector<MemberPrediction> ms;
        for (std::size_t k = 0; k < member_uncertainties.size(); ++k) {
          const auto& u = member_uncertainties[k];
          ms.push_back({k, 0, std::vector<double>(u.size(), 0.0), {u}});
        }
        const auto scores = ensemble_scores(ms);
        return py::make_tuple(scores, ensemble_label(scores));
      },
      "Per-class mean inverse uncertainty and the chosen class for one sample.");
  m.def("combined_uncertainty", [](const std::vector<double>& u, std::optional<std::vector<double>> c) {
    const std::vector<double> ones(u.size(), 1.0);
    return combined_uncertainty(u, c ? *c : ones);
  }, py::arg("uncertainties"), py::arg("sensitivities") = py::none());

  m.def("cohen_kappa", [](const ConfusionMatrix& cm) { return cohen_kappa(cm); });
  m.def("binary_metrics", [](std::uint64_t tp, std::uint64_t tn, std::uint64_t fp, std::uint64_t fn) {
    ConfusionCounts c;
    c.tp = tp;
    c.tn = tn;
    c.fp = fp;
    c.fn = fn;
    return report_dict(binary_metrics(c));
  }, py::arg("tp"), py::arg("tn"), py::arg("fp"), py::arg("fn"));
  m.def("multiclass_metrics", [](const ConfusionMatrix& cm) { return report_dict(multiclass_metrics(cm)); });
  m.def(
      "roc_curve",
      [](const std::vector<double>& scores, const std::vector<int>& labels) {
        if (scores.size() != labels.size()) throw std::invalid_argument("scores and labels differ in length");
        std::vector<ScoredLabel> s;
        for (std::size_t i = 0; i < scores.size(); ++i) s.push_back({scores[i], labels[i]});
        const RocCurve r = roc_curve_auc(s);
        Array pts(std::vector<py::ssize_t>{static_cast<py::ssize_t>(r.points.size()), 3});
        auto v = pts.mutable_unchecked<2>();
        for (std::size_t i = 0; i < r.points.size(); ++i) {
          v(i, 0) = r.points[i].fpr;
          v(i, 1) = r.points[i].tpr;
          v(i, 2) = r.points[i].threshold;
        }
        return py::make_tuple(pts, r.area);
      },
      "Returns (points as rows of fpr, tpr, threshold; area).");
  m.def("stratified_folds", [](const std::vector<int>& labels, std::size_t n_folds, std::uint64_t seed) {
    return stratified_folds(labels, n_folds, seed).folds;
  });
  m.def("class_weights", [](const std::vector<int>& labels, std::size_t classes) {
    return class_weights(labels, classes);
  });

  m.def(
      "synth_generate",
      [](std::size_t n_per_class, std::size_t side, std::uint64_t seed) {
        const auto images = synth_generate(n_per_class, side, seed);
        Array stack(std::vector<py::ssize_t>{static_cast<py::ssize_t>(images.size()), static_cast<py::ssize_t>(side),
                                             static_cast<py::ssize_t>(side)});
        std::vector<std::string> labels;
        double* dst = stack.mutable_data();
        for (const auto& im : images) {
          dst = std::copy(im.pixels.raw(), im.pixels.raw() + im.pixels.size(), dst);
          labels.emplace_back(diagnosis_name(im.label));
        }
        return py::make_tuple(stack, labels);
      },
      py::arg("n_per_class"), py::arg("side"), py::arg("seed"));

  m.def(
      "synth",
      [](std::optional<std::filesystem::path> config, std::optional<std::uint64_t> seed,
         std::optional<std::filesystem::path> out, const std::string& scale) {
        RunConfig c = resolve(config, seed, out, scale);
        if (seed) c.synth.seed = *seed;
        return run_synth(c);
      },
      py::arg("config") = py::none(), py::arg("seed") = py::none(), py::arg("out") = py::none(),
      py::arg("scale") = "desk",
      "Writes a synthetic dataset; returns the manifest path.");
  m.def(
      "train",
      [](std::optional<std::filesystem::path> config, std::optional<std::uint64_t> seed,
         std::optional<std::filesystem::path> out, const std::string& scale) {
        const RunConfig c = resolve(config, seed, out, scale);
        c.validate();
        py::gil_scoped_release release;
        return run_train(c).ensemble_manifest;
      },
      py::arg("config") = py::none(), py::arg("seed") = py::none(), py::arg("out") = py::none(),
      py::arg("scale") = "desk",
      "Trains every tree level; returns the ensemble manifest path.");
  m.def(
      "evaluate",
      [](std::optional<std::filesystem::path> config, std::optional<std::uint64_t> seed,
         std::optional<std::filesystem::path> out, const std::string& scale) {
        const RunConfig c = resolve(config, seed, out, scale);
        c.validate();
        py::gil_scoped_release release;
        return run_evaluate(c).files;
      },
      py::arg("config") = py::none(), py::arg("seed") = py::none(), py::arg("out") = py::none(),
      py::arg("scale") = "desk",
      "Runs stratified cross-validation; returns the written report files.");
  m.def(
      "predict",
      [](const std::vector<std::filesystem::path>& images, std::optional<std::filesystem::path> config,
         std::optional<std::uint64_t> seed, std::optional<std::filesystem::path> out, const std::string& scale) {
        const RunConfig c = resolve(config, seed, out, scale);
        c.validate();
        py::gil_scoped_release release;
        return run_predict(c, images);
      },
      py::arg("images"), py::arg("config") = py::none(), py::arg("seed") = py::none(), py::arg("out") = py::none(),
      py::arg("scale") = "desk",
      "Classifies PGM images with a trained ensemble; returns the predictions CSV path.");
}
