#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "ttaseg/checkpoint.hpp"
#include "ttaseg/commands.hpp"
#include "ttaseg/error.hpp"
#include "ttaseg/evaluation.hpp"
#include "ttaseg/geometry.hpp"
#include "ttaseg/gradcheck.hpp"
#include "ttaseg/inference.hpp"
#include "ttaseg/ntf.hpp"
#include "ttaseg/objective.hpp"
#include "ttaseg/phantom.hpp"
#include "ttaseg/training.hpp"

namespace py = pybind11;
using namespace ttaseg;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::array_t<bool> to_bool_array(const std::vector<std::uint8_t>& v, const Shape& shape) {
  std::vector<py::ssize_t> dims(shape.begin(), shape.end());
  py::array_t<bool> out(dims);
  bool* p = out.mutable_data();
  for (std::size_t i = 0; i < v.size(); ++i) p[i] = v[i] != 0;
  return out;
}

std::vector<std::uint8_t> to_validity(const py::array_t<bool, py::array::c_style | py::array::forcecast>& a) {
  std::vector<std::uint8_t> v(static_cast<std::size_t>(a.size()));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.data()[i] ? 1 : 0;
  return v;
}

McConfig make_mc(std::size_t samples, double t_range, double r_range, std::uint64_t seed) {
  McConfig mc;
  mc.samples = samples;
  mc.transform.translation_range = t_range;
  mc.transform.rotation_range = r_range;
  mc.seed = seed;
  return mc;
}

Dataset to_dataset(const py::list& items) {
  Dataset data;
  for (const auto& h : items) {
    const auto t = h.cast<py::tuple>();
    if (t.size() != 4) throw ArgumentError("dataset items are (image, mask, subject_id, slice_id)");
    data.push_back(Phantom{to_tensor(t[0].cast<Array>()), to_tensor(t[1].cast<Array>()), t[2].cast<int>(),
                           t[3].cast<int>()});
  }
  return data;
}

py::list from_dataset(const Dataset& data) {
  py::list out;
  for (const Phantom& p : data) out.append(py::make_tuple(to_array(p.image), to_array(p.mask), p.subject_id, p.slice_id));
  return out;
}

py::dict result_dict(const SegmentationResult& r) {
  py::dict d;
  d["mask"] = to_array(r.mask);
  d["median"] = to_array(r.median);
  d["sigma"] = to_array(r.sigma);
  d["threshold"] = to_array(r.threshold);
  return d;
}

}  // namespace

PYBIND11_MODULE(_ttaseg, m) {
  m.doc() = "Segmentation with Monte Carlo test-time augmentation and uncertainty-aware thresholding.";

  py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<StateError>(m, "StateError", PyExc_RuntimeError);
  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);

  py::class_<SegModel>(m, "SegModel")
      .def_static(
          "create",
          [](std::uint64_t seed, std::size_t depth, std::size_t base_width, double dropout) {
            ModelConfig cfg;
            cfg.depth = depth;
            cfg.base_width = base_width;
            cfg.dropout_rate = dropout;
            return SegModel::create(cfg, seed);
          },
          py::arg("seed") = 0, py::arg("depth") = 3, py::arg("base_width") = 8, py::arg("dropout") = 0.5)
      .def_static("load", &load_checkpoint, py::arg("path"))
      .def("save", [](const SegModel& s, const std::filesystem::path& p) { save_checkpoint(p, s); }, py::arg("path"))
      .def(
          "predict", [](const SegModel& s, const Array& image) { return to_array(model_forward(s, to_tensor(image))); },
          py::arg("image"), "Heat map of one H x W image (inference mode).")
      .def_property_readonly("depth", [](const SegModel& s) { return s.config().depth; })
      .def_property_readonly("parameter_count", [](const SegModel& s) {
        std::size_t n = 0;
        for (const auto& p : s.parameters()) n += p.value->size();
        return n;
      });

  m.def(
      "generate_phantom",
      [](std::uint64_t seed, int subject, int slice, std::size_t size, double noise, double bias) {
        PhantomConfig cfg = scaled_phantom_config(size);
        cfg.noise_sigma = noise;
        cfg.bias_amplitude = bias;
        const Phantom p = generate_phantom(seed, cfg, subject, slice);
        return py::make_tuple(to_array(p.image), to_array(p.mask));
      },
      py::arg("seed"), py::arg("subject") = 0, py::arg("slice") = 0, py::arg("size") = 64, py::arg("noise") = 0.05,
      py::arg("bias") = 0.1, "Returns (image, mask).");
  m.def(
      "generate_dataset",
      [](std::uint64_t seed, int subjects, int slices, std::size_t size) {
        return from_dataset(generate_dataset(seed, subjects, slices, scaled_phantom_config(size)));
      },
      py::arg("seed"), py::arg("subjects"), py::arg("slices"), py::arg("size") = 64, "List of (image, mask, subject_id, slice_id).");
  m.def("load_dataset", [](const std::filesystem::path& p) { return from_dataset(load_dataset(p)); }, py::arg("path"));
  m.def("save_dataset", [](const std::filesystem::path& p, const py::list& d) { save_dataset(p, to_dataset(d)); },
        py::arg("path"), py::arg("data"));

  m.def(
      "train",
      [](SegModel& model, const py::list& data, int epochs, std::uint64_t seed, double lr, double l1,
         std::size_t batch, bool augment) {
        TrainConfig cfg;
        cfg.epochs = epochs;
        cfg.seed = seed;
        cfg.learning_rate = lr;
        cfg.lambda_l1 = l1;
        cfg.batch_size = batch;
        cfg.augment.enabled = augment;
        const Dataset train = to_dataset(data);
        TrainLog log;
        {
          py::gil_scoped_release release;
          log = fit(model, train, {}, cfg);
        }
        py::list rows;
        for (const auto& r : log.epochs) rows.append(py::make_tuple(r.epoch, r.train_loss, r.train_bce, r.train_dice));
        return rows;
      },
      py::arg("model"), py::arg("data"), py::arg("epochs") = 200, py::arg("seed") = 0, py::arg("lr") = 1e-3,
      py::arg("l1") = 1e-5, py::arg("batch") = 8, py::arg("augment") = true,
      "Trains in place; returns (epoch, loss, bce, soft_dice) rows.");

  m.def(
      "warp",
      [](const Array& image, double tx, double ty, double theta, bool nearest) {
        const WarpResult r = warp(to_tensor(image), build_affine(tx, ty, theta),
                                  nearest ? Interpolation::Nearest : Interpolation::Bilinear);
        return py::make_tuple(to_array(r.image), to_bool_array(r.validity, r.image.shape()));
      },
      py::arg("image"), py::arg("tx"), py::arg("ty"), py::arg("theta"), py::arg("nearest") = false,
      "Rigid warp about the image centre; returns (image, validity).");

  m.def(
      "mc_predict",
      [](const SegModel& model, const Array& image, std::size_t samples, double t_range, double r_range,
         std::uint64_t seed) {
        const Tensor img = to_tensor(image);
        McStack s;
        {
          py::gil_scoped_release release;
          s = mc_predict(model, img, make_mc(samples, t_range, r_range, seed));
        }
        py::list transforms;
        for (const auto& t : s.transforms) transforms.append(py::make_tuple(t.tx, t.ty, t.theta));
        return py::make_tuple(to_array(s.heat), to_bool_array(s.validity, s.heat.shape()), transforms);
      },
      py::arg("model"), py::arg("image"), py::arg("samples") = 16, py::arg("t_range") = 20.0,
      py::arg("r_range") = 20.0, py::arg("seed") = 0, "Returns (heat K x H x W, validity, [(tx, ty, theta)]).");
  m.def(
      "aggregate",
      [](const Array& stack, const py::array_t<bool, py::array::c_style | py::array::forcecast>& validity) {
        const PixelStats s = aggregate(to_tensor(stack), to_validity(validity));
        std::vector<py::ssize_t> dims(s.median.shape().begin(), s.median.shape().end());
        py::array_t<std::int64_t> counts(dims);
        for (std::size_t i = 0; i < s.valid_count.size(); ++i) counts.mutable_data()[i] = static_cast<std::int64_t>(s.valid_count[i]);
        return py::make_tuple(to_array(s.median), to_array(s.sigma), counts);
      },
      py::arg("stack"), py::arg("validity"), "Returns (median, sigma, valid_count).");
  m.def(
      "segment",
      [](const SegModel& model, const Array& image, std::size_t samples, double gamma, double baseline,
         double t_range, double r_range, std::uint64_t seed) {
        const Tensor img = to_tensor(image);
        SegmentationResult r;
        {
          py::gil_scoped_release release;
          r = run_pipeline(model, img, make_mc(samples, t_range, r_range, seed), ThresholdConfig{baseline, gamma});
        }
        return result_dict(r);
      },
      py::arg("model"), py::arg("image"), py::arg("samples") = 16, py::arg("gamma") = 0.1, py::arg("baseline") = 0.5,
      py::arg("t_range") = 20.0, py::arg("r_range") = 20.0, py::arg("seed") = 0,
      "Full pipeline; dict with mask, median, sigma and threshold maps.");
  m.def(
      "fixed_threshold", [](const Array& map, double level) { return to_array(fixed_threshold(to_tensor(map), level)); },
      py::arg("map"), py::arg("level") = 0.5);

  m.def(
      "bce", [](const Array& t, const Array& p) { return bce(to_tensor(t), to_tensor(p)); }, py::arg("y_true"),
      py::arg("y_pred"));
  m.def(
      "soft_dice", [](const Array& t, const Array& p) { return soft_dice(to_tensor(t), to_tensor(p)); },
      py::arg("y_true"), py::arg("y_pred"));
  m.def(
      "combined_loss", [](const Array& t, const Array& p) { return combined_loss(to_tensor(t), to_tensor(p)).combined; },
      py::arg("y_true"), py::arg("y_pred"), "BCE minus exp(1 + soft Dice).");
  m.def(
      "hard_dice", [](const Array& a, const Array& b) { return hard_dice(to_tensor(a), to_tensor(b)); },
      py::arg("mask_a"), py::arg("mask_b"));

  m.def("save_tensor", [](const std::filesystem::path& p, const Array& a) { save_tensor(p, to_tensor(a)); },
        py::arg("path"), py::arg("array"));
  m.def("load_tensor", [](const std::filesystem::path& p) { return to_array(load_tensor(p)); }, py::arg("path"));

  m.def(
      "gradcheck",
      [](std::uint64_t seed, const std::string& fault_layer) {
        GradcheckConfig cfg;
        cfg.seed = seed;
        cfg.fault_layer = fault_layer;
        GradcheckReport r;
        {
          py::gil_scoped_release release;
          r = run_gradcheck(cfg);
        }
        std::ostringstream os;
        print_gradcheck_report(os, r);
        py::dict d;
        d["ok"] = r.ok();
        d["pass_fraction"] = r.pass_fraction();
        d["failed_layers"] = r.failed_layers();
        d["report"] = os.str();
        return d;
      },
      py::arg("seed") = 1, py::arg("fault_layer") = "");

  m.def(
      "cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a ttaseg subcommand in-process; returns (exit_code, stdout, stderr).");
}
