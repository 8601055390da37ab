// Python bindings for the core operations: layers, batch normalization,
// the adaptive gate, dataset plumbing and the training entry points.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <span>

#include "adabn/batchnorm.hpp"
#include "adabn/checks.hpp"
#include "adabn/config.hpp"
#include "adabn/dataset.hpp"
#include "adabn/gate.hpp"
#include "adabn/layers.hpp"
#include "adabn/trainer.hpp"
#include "adabn/version.hpp"

namespace py = pybind11;
using namespace adabn;

namespace {

using Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

TensorF to_tensor(const Array& array) {
  Shape shape;
  for (py::ssize_t d = 0; d < array.ndim(); ++d)
    shape.push_back(static_cast<int>(array.shape(d)));
  std::vector<float> data(array.data(), array.data() + array.size());
  return TensorF(std::move(shape), std::move(data));
}

Array from_tensor(const TensorF& tensor) {
  std::vector<py::ssize_t> shape(tensor.shape().begin(), tensor.shape().end());
  Array array(shape);
  std::memcpy(array.mutable_data(), tensor.data(), sizeof(float) * std::size_t(tensor.size()));
  return array;
}

LabeledDataset to_dataset(const Array& images, const std::vector<int>& labels, int class_count) {
  if (images.ndim() != 4) throw ShapeError("images must be [N x C x H x W]");
  LabeledDataset data;
  data.images = to_tensor(images);
  data.labels = labels;
  data.class_count = class_count;
  data.name = "python";
  if (static_cast<int>(labels.size()) != data.count())
    throw DataError("label count does not match image count");
  return data;
}

TrainConfig config_from_dict(const py::dict& kwargs) {
  TrainConfig config;
  for (const auto& item : kwargs) {
    const std::string key = py::str(item.first);
    const std::string value = py::str(item.second);
    apply_kv(config, key, value);
  }
  config.validate();
  return config;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "CNN training engine with a per-batch adaptive normalization gate";
  m.attr("__version__") = kArtifactVersion;

  py::register_exception<Error>(m, "EngineError");

  // --- layers -------------------------------------------------------------
  m.def(
      "conv2d",
      [](const Array& input, const Array& kernels, const std::vector<float>& bias, int stride,
         int padding) {
        ConvParams<float> params{to_tensor(kernels), bias, stride, padding};
        auto [out, cache] = conv2d(to_tensor(input), params);
        return from_tensor(out);
      },
      py::arg("input"), py::arg("kernels"), py::arg("bias"), py::arg("stride") = 1,
      py::arg("padding") = 0, "Cross-correlation forward pass over [N,C,H,W]");

  m.def(
      "maxpool2d",
      [](const Array& input, int k) {
        auto [out, cache] = maxpool2d(to_tensor(input), k);
        return from_tensor(out);
      },
      py::arg("input"), py::arg("k") = 2);

  m.def(
      "relu",
      [](const Array& input) {
        auto [out, cache] = relu(to_tensor(input));
        return from_tensor(out);
      },
      py::arg("input"));

  m.def(
      "dense_affine",
      [](const Array& input, const Array& weights, const std::vector<float>& bias) {
        DenseParams<float> params{to_tensor(weights), bias};
        auto [out, cache] = dense_affine(to_tensor(input), params);
        return from_tensor(out);
      },
      py::arg("input"), py::arg("weights"), py::arg("bias"));

  m.def(
      "softmax_cross_entropy",
      [](const Array& logits, const std::vector<int>& labels) {
        const auto result = softmax_cross_entropy(to_tensor(logits), labels);
        return py::make_tuple(result.loss, from_tensor(result.probs),
                              from_tensor(result.grad_logits));
      },
      py::arg("logits"), py::arg("labels"), "Returns (loss, probs, grad_logits)");

  // --- batch normalization --------------------------------------------------
  py::class_<BatchNormParams<float>>(m, "BatchNorm")
      .def(py::init<int>(), py::arg("channels"))
      .def_readwrite("eps", &BatchNormParams<float>::eps)
      .def_readwrite("momentum", &BatchNormParams<float>::momentum)
      .def_readonly("batches_seen", &BatchNormParams<float>::batches_seen)
      .def_property_readonly("gamma",
                             [](const BatchNormParams<float>& p) { return p.gamma; })
      .def_property_readonly("beta", [](const BatchNormParams<float>& p) { return p.beta; })
      .def_property_readonly("running_mean",
                             [](const BatchNormParams<float>& p) { return p.running_mean; })
      .def_property_readonly("running_var",
                             [](const BatchNormParams<float>& p) { return p.running_var; })
      .def(
          "forward_train",
          [](BatchNormParams<float>& params, const Array& input) {
            auto [out, cache] = bn_forward_train(to_tensor(input), params);
            return py::make_tuple(from_tensor(out), from_tensor(cache.x_hat));
          },
          py::arg("input"), "Returns (output, x_hat); updates the running statistics")
      .def(
          "forward_eval",
          [](const BatchNormParams<float>& params, const Array& input) {
            return from_tensor(bn_forward_eval(to_tensor(input), params));
          },
          py::arg("input"));

  // --- adaptive gate --------------------------------------------------------
  m.def(
      "instance_average",
      [](const Array& image) { return instance_average(to_tensor(image)); }, py::arg("image"));

  py::class_<ThresholdTable>(m, "ThresholdTable")
      .def_readonly("mean", &ThresholdTable::mean)
      .def_readonly("a_min", &ThresholdTable::a_min)
      .def_readonly("a_max", &ThresholdTable::a_max)
      .def_readonly("upr_p", &ThresholdTable::upr_p)
      .def_readonly("lor_p", &ThresholdTable::lor_p);

  m.def(
      "calibrate_thresholds",
      [](const Array& images, const std::vector<int>& labels, int class_count, double upr_p,
         double lor_p) {
        const LabeledDataset data = to_dataset(images, labels, class_count);
        ClassAverageTable table(class_count);
        for (int i = 0; i < data.count(); ++i)
          table.add(data.labels[std::size_t(i)], instance_average(data.image(i)));
        return finalize_thresholds(table, upr_p, lor_p);
      },
      py::arg("images"), py::arg("labels"), py::arg("class_count"), py::arg("upr_p") = 0.10,
      py::arg("lor_p") = 0.10,
      "Per-class mean pixel averages expanded into [a_min, a_max] intervals");

  m.def(
      "gate_batch",
      [](const Array& images, const std::vector<int>& labels, const ThresholdTable& thresholds) {
        const GateRecord record = gate_batch(to_tensor(images), labels, thresholds);
        py::dict out;
        out["decision"] = record.decision;
        if (record.decision) {
          out["trigger_instance"] = record.trigger_instance;
          out["trigger_class"] = record.trigger_class;
          out["trigger_average"] = record.trigger_average;
        }
        return out;
      },
      py::arg("images"), py::arg("labels"), py::arg("thresholds"),
      "Whole-batch decision: normalize iff any instance leaves its class interval");

  // --- dataset plumbing -----------------------------------------------------
  m.def(
      "make_batches",
      [](int n, int batch_size, std::uint64_t seed) {
        return make_batches(n, batch_size, seed).batches;
      },
      py::arg("n"), py::arg("batch_size"), py::arg("seed"));

  m.def(
      "kfold_split",
      [](int n, int k, std::uint64_t seed) {
        const FoldSplit split = kfold_split(n, k, seed);
        py::list folds;
        for (const auto& fold : split.folds)
          folds.append(py::make_tuple(fold.train, fold.validation));
        return folds;
      },
      py::arg("n"), py::arg("k"), py::arg("seed"));

  m.def(
      "synthetic_digits",
      [](int n, std::uint64_t seed) {
        const LabeledDataset data = make_synthetic_digits(n, seed);
        return py::make_tuple(from_tensor(data.images), data.labels);
      },
      py::arg("n"), py::arg("seed") = 1, "Procedural 10-class digit images as (images, labels)");

  m.def(
      "read_idx_pair",
      [](const std::string& images_path, const std::string& labels_path) {
        const LabeledDataset data = read_idx_pair(images_path, labels_path);
        return py::make_tuple(from_tensor(data.images), data.labels);
      },
      py::arg("images_path"), py::arg("labels_path"));

  // --- training -------------------------------------------------------------
  m.def(
      "gradient_checks",
      [](std::uint64_t seed, int points) {
        py::list out;
        for (const GradCheckResult& r : run_gradient_checks(seed, points)) {
          py::dict entry;
          entry["layer"] = r.layer;
          entry["max_rel_error"] = r.max_rel_error;
          entry["tolerance"] = r.tolerance;
          entry["pass"] = r.pass();
          out.append(entry);
        }
        return out;
      },
      py::arg("seed") = 1, py::arg("points") = 3);

  m.def(
      "run_training",
      [](const Array& images, const std::vector<int>& labels, int class_count,
         const std::vector<int>& train_indices, const std::vector<int>& val_indices,
         const py::dict& config_kwargs) {
        const LabeledDataset data = to_dataset(images, labels, class_count);
        const TrainConfig config = config_from_dict(config_kwargs);
        const RunMetrics metrics = run_training(config, data, train_indices, val_indices);
        py::dict out;
        out["final_accuracy"] = metrics.final_accuracy;
        out["bn_batches_applied"] = metrics.bn_batches_applied;
        py::list epochs;
        for (const EpochMetrics& e : metrics.epochs) {
          py::dict row;
          row["epoch"] = e.epoch;
          row["mean_loss"] = e.mean_loss;
          row["val_accuracy"] = e.val_accuracy;
          row["bn_fraction"] = e.bn_fraction;
          epochs.append(row);
        }
        out["epochs"] = epochs;
        return out;
      },
      py::arg("images"), py::arg("labels"), py::arg("class_count"), py::arg("train_indices"),
      py::arg("val_indices"), py::arg("config") = py::dict(),
      "One training run; config keys mirror the CLI configuration keys");

  m.def(
      "run_crossval",
      [](const Array& images, const std::vector<int>& labels, int class_count,
         const py::dict& config_kwargs) {
        const LabeledDataset data = to_dataset(images, labels, class_count);
        const TrainConfig config = config_from_dict(config_kwargs);
        const CrossvalSummary summary = run_crossval(config, data);
        py::dict out;
        out["fold_accuracies"] = summary.fold_accuracies;
        out["mean_accuracy"] = summary.mean_accuracy;
        out["std_accuracy"] = summary.std_accuracy;
        return out;
      },
      py::arg("images"), py::arg("labels"), py::arg("class_count"),
      py::arg("config") = py::dict());
}
