#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <utility>

#include "maskgate/checkpoint.hpp"
#include "maskgate/config.hpp"
#include "maskgate/data.hpp"
#include "maskgate/error.hpp"
#include "maskgate/mask_module.hpp"
#include "maskgate/model.hpp"
#include "maskgate/prune.hpp"
#include "maskgate/train.hpp"

namespace py = pybind11;
using namespace maskgate;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  std::vector<int> shape(a.ndim());
  for (py::ssize_t i = 0; i < a.ndim(); ++i) {
    shape[static_cast<std::size_t>(i)] = static_cast<int>(a.shape(i));
  }
  std::vector<double> values(static_cast<std::size_t>(a.size()));
  std::memcpy(values.data(), a.data(), values.size() * sizeof(double));
  return Tensor(shape, std::move(values));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  std::memcpy(out.mutable_data(), t.values().data(), t.size() * sizeof(double));
  return out;
}

ModelKind kind_from_name(const std::string& name) {
  if (name == "mlp-m") return ModelKind::mlp_m;
  if (name == "convnet-m") return ModelKind::convnet_m;
  throw ConfigError("model kind '" + name + "' is not mlp-m or convnet-m");
}

std::string kind_to_name(ModelKind kind) {
  return kind == ModelKind::mlp_m ? "mlp-m" : "convnet-m";
}

SteSign ste_from_name(const std::string& name) {
  if (name == "paper") return SteSign::paper;
  if (name == "chain") return SteSign::chain;
  throw ConfigError("ste sign convention '" + name + "' is not paper or chain");
}

std::vector<SchedulePoint> schedule_from_pairs(
    const std::vector<std::pair<int, double>>& pairs) {
  std::vector<SchedulePoint> out;
  for (const auto& [epoch, mult] : pairs) out.push_back({epoch, mult});
  return out;
}

py::list history_to_list(const std::vector<EpochStats>& history) {
  py::list out;
  for (const EpochStats& s : history) {
    py::dict d;
    d["epoch"] = s.epoch;
    d["loss"] = s.loss;
    d["top1"] = s.top1;
    d["backbone_lr"] = s.backbone_lr;
    d["mask_lr"] = s.mask_lr;
    if (s.eval_top1 >= 0) {
      d["eval_loss"] = s.eval_loss;
      d["eval_top1"] = s.eval_top1;
    }
    out.append(std::move(d));
  }
  return out;
}

py::dict row_to_dict(const TraceRow& row) {
  py::dict d;
  d["epoch"] = row.epoch;
  d["p"] = row.p;
  return d;
}

py::dict result_to_dict(const TrainResult& r) {
  py::dict out;
  py::list rows;
  for (const auto& row : r.trace.rows) rows.append(row_to_dict(row));
  out["trace_modules"] = r.trace.modules;
  out["trace"] = std::move(rows);
  out["trace_csv"] = format_trace(r.trace);
  out["history"] = history_to_list(r.history);
  out["mask_state_log"] = r.mask_state_log;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "feature disentanglement masks: tensors, training, pruning";

  py::register_exception<Error>(m, "MaskgateError", PyExc_RuntimeError);

  py::class_<Dataset>(m, "Dataset")
      .def(py::init([](py::array_t<double, py::array::c_style | py::array::forcecast> inputs,
                       std::vector<int> labels, int classes, std::string name) {
             Dataset d;
             d.inputs = tensor_from_array(inputs);
             d.labels = std::move(labels);
             d.classes = classes;
             d.name = std::move(name);
             if (d.inputs.dim(0) != static_cast<int>(d.labels.size())) {
               throw DataError("dataset inputs and labels disagree on sample count");
             }
             return d;
           }),
           py::arg("inputs"), py::arg("labels"), py::arg("classes"),
           py::arg("name") = "dataset")
      .def_property_readonly("inputs",
                             [](const Dataset& d) { return array_from_tensor(d.inputs); })
      .def_readonly("labels", &Dataset::labels)
      .def_readonly("classes", &Dataset::classes)
      .def_readonly("name", &Dataset::name)
      .def("__len__", &Dataset::size);

  m.def(
      "synthetic",
      [](int n, double sigma, double delta, std::uint64_t seed) {
        SyntheticSpec spec;
        spec.samples_per_class = n;
        spec.sigma = sigma;
        spec.delta = delta;
        spec.seed = seed;
        return generate_synthetic_3d(spec);
      },
      py::arg("n") = 200, py::arg("sigma") = 0.1, py::arg("delta") = 2.0,
      py::arg("seed") = 1);
  m.def("load_idx", &load_idx, py::arg("images"), py::arg("labels"));
  m.def("load_csv", &load_csv, py::arg("path"), py::arg("width"), py::arg("height"),
        py::arg("channels"));
  m.def("split_holdout", &split_holdout, py::arg("dataset"), py::arg("k"),
        py::arg("seed"));

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init([](const std::string& kind) { return default_config(kind_from_name(kind)); }),
           py::arg("kind") = "convnet-m")
      .def_property(
          "kind", [](const ModelConfig& c) { return kind_to_name(c.kind); },
          [](ModelConfig& c, const std::string& name) { c.kind = kind_from_name(name); })
      .def_readwrite("widths", &ModelConfig::widths)
      .def_readwrite("in_channels", &ModelConfig::in_channels)
      .def_readwrite("in_h", &ModelConfig::in_h)
      .def_readwrite("in_w", &ModelConfig::in_w)
      .def_readwrite("mask_placement", &ModelConfig::mask_placement)
      .def_readwrite("use_residual", &ModelConfig::use_residual)
      .def_readwrite("classes", &ModelConfig::classes)
      .def_readwrite("branch_dims", &ModelConfig::branch_dims)
      .def_readwrite("mask_hidden", &ModelConfig::mask_hidden)
      .def_readwrite("tau", &ModelConfig::tau)
      .def_property(
          "ste_sign_convention",
          [](const ModelConfig& c) {
            return c.ste == SteSign::paper ? "paper" : "chain";
          },
          [](ModelConfig& c, const std::string& name) { c.ste = ste_from_name(name); })
      .def("validate", &ModelConfig::validate);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("batch", &TrainConfig::batch)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("freeze_branches", &TrainConfig::freeze_branches)
      .def_property(
          "lr", [](const TrainConfig& c) { return c.sgd.lr; },
          [](TrainConfig& c, double v) { c.sgd.lr = v; })
      .def_property(
          "momentum", [](const TrainConfig& c) { return c.sgd.momentum; },
          [](TrainConfig& c, double v) { c.sgd.momentum = v; })
      .def_property(
          "weight_decay", [](const TrainConfig& c) { return c.sgd.weight_decay; },
          [](TrainConfig& c, double v) { c.sgd.weight_decay = v; })
      .def_property(
          "mask_lr", [](const TrainConfig& c) { return c.adam.lr; },
          [](TrainConfig& c, double v) { c.adam.lr = v; })
      .def_property(
          "schedule",
          [](const TrainConfig& c) {
            std::vector<std::pair<int, double>> out;
            for (const auto& p : c.schedule) out.emplace_back(p.epoch, p.multiplier);
            return out;
          },
          [](TrainConfig& c, const std::vector<std::pair<int, double>>& pairs) {
            c.schedule = schedule_from_pairs(pairs);
          })
      .def("default_schedule",
           [](TrainConfig& c) { c.schedule = default_schedule(c.epochs); });

  py::class_<MaskedNetwork>(m, "MaskedNetwork")
      .def_property_readonly("config", [](const MaskedNetwork& n) { return n.cfg; })
      .def_property_readonly("masks_frozen",
                             [](const MaskedNetwork& n) { return n.masks_frozen; })
      .def("count_params", [](const MaskedNetwork& n) { return count_params(n); })
      .def("mask_proportions",
           [](const MaskedNetwork& n) {
             std::vector<double> out;
             for (const MaskState& s : n.mask_states()) out.push_back(s.p_nonlinear);
             return out;
           })
      .def("mask_states",
           [](const MaskedNetwork& n) {
             py::list out;
             for (const MaskState& s : n.mask_states()) {
               py::dict d;
               d["block"] = s.block;
               d["c"] = s.c;
               d["mask1"] = s.mask1;
               d["p_nonlinear"] = s.p_nonlinear;
               out.append(std::move(d));
             }
             return out;
           })
      .def("named_parameters",
           [](const MaskedNetwork& n) {
             py::list out;
             for (const auto& [name, t] : n.named_parameters()) {
               out.append(py::make_tuple(name, array_from_tensor(t)));
             }
             return out;
           })
      .def("forward",
           [](const MaskedNetwork& n,
              py::array_t<double, py::array::c_style | py::array::forcecast> x) {
             Graph g;
             return array_from_tensor(model_forward(g, n, tensor_from_array(x)));
           })
      .def("save",
           [](const MaskedNetwork& n, const std::string& path) { save_checkpoint(path, n); })
      .def_static("load", [](const std::string& path) { return load_checkpoint(path); })
      .def("clone", &MaskedNetwork::clone);

  m.def("build", &build, py::arg("config"), py::arg("seed") = 1);
  m.def(
      "train",
      [](MaskedNetwork& net, const Dataset& data, const TrainConfig& cfg,
         const Dataset* eval_data) { return result_to_dict(train(net, data, cfg, eval_data)); },
      py::arg("net"), py::arg("data"), py::arg("config"), py::arg("eval_data") = nullptr);
  m.def("evaluate_top1", &evaluate_top1, py::arg("net"), py::arg("data"));

  m.def("prune", [](const MaskedNetwork& net) {
    return rebuild_pruned(net, derive_keep_plan(net));
  });
  m.def(
      "finetune",
      [](MaskedNetwork& net, const Dataset& data, int epochs, double lr,
         std::uint64_t seed) {
        FinetuneConfig cfg;
        cfg.epochs = epochs;
        cfg.lr = lr;
        cfg.seed = seed;
        return result_to_dict(finetune(net, data, cfg));
      },
      py::arg("net"), py::arg("data"), py::arg("epochs") = 40, py::arg("lr") = 0.001,
      py::arg("seed") = 1);

  m.def(
      "binarize",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> z, double tau) {
        MaskPair pair = binarize(tensor_from_array(z), tau);
        return py::make_tuple(array_from_tensor(pair.mask1), array_from_tensor(pair.mask2));
      },
      py::arg("z"), py::arg("tau") = 0.0);
  m.def(
      "proportion_nonlinear",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> mask1) {
        return proportion_nonlinear(tensor_from_array(mask1));
      },
      py::arg("mask1"));

  m.def("parse_trace_csv", [](const std::string& text) {
    ProportionTrace t = parse_trace(text);
    py::dict out;
    out["modules"] = t.modules;
    py::list rows;
    for (const auto& row : t.rows) rows.append(row_to_dict(row));
    out["rows"] = std::move(rows);
    return out;
  });
}
