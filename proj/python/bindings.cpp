#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "badvfl/attack.hpp"
#include "badvfl/common.hpp"
#include "badvfl/config.hpp"
#include "badvfl/dataset.hpp"
#include "badvfl/defense.hpp"
#include "badvfl/nn.hpp"
#include "badvfl/runner.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace badvfl;

namespace {

py::array_t<double> matrix_to_array(const Matrix& m) {
  py::array_t<double> out({m.rows, m.cols});
  std::copy(m.data.begin(), m.data.end(), out.mutable_data());
  return out;
}

Matrix array_to_matrix(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw InputError("expected a 2-d array");
  Matrix m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.data.begin());
  return m;
}

py::object json_to_py(const json& j) {
  switch (j.type()) {
    case json::value_t::null: return py::none();
    case json::value_t::boolean: return py::bool_(j.get<bool>());
    case json::value_t::number_integer: return py::int_(j.get<int64_t>());
    case json::value_t::number_unsigned: return py::int_(j.get<uint64_t>());
    case json::value_t::number_float: return py::float_(j.get<double>());
    case json::value_t::string: return py::str(j.get<std::string>());
    case json::value_t::array: {
      py::list out;
      for (const auto& v : j) out.append(json_to_py(v));
      return out;
    }
    case json::value_t::object: {
      py::dict out;
      for (auto it = j.begin(); it != j.end(); ++it)
        out[py::str(it.key())] = json_to_py(it.value());
      return out;
    }
    default: return py::none();
  }
}

json py_to_json(const py::handle& h) {
  if (h.is_none()) return nullptr;
  if (py::isinstance<py::bool_>(h)) return h.cast<bool>();
  if (py::isinstance<py::int_>(h)) return h.cast<int64_t>();
  if (py::isinstance<py::float_>(h)) return h.cast<double>();
  if (py::isinstance<py::str>(h)) return h.cast<std::string>();
  if (py::isinstance<py::dict>(h)) {
    json out = json::object();
    for (auto item : h.cast<py::dict>())
      out[item.first.cast<std::string>()] = py_to_json(item.second);
    return out;
  }
  if (py::isinstance<py::list>(h) || py::isinstance<py::tuple>(h)) {
    json out = json::array();
    for (auto item : h.cast<py::sequence>()) out.push_back(py_to_json(item));
    return out;
  }
  throw InputError("config values must be JSON-compatible");
}

TriggerSpec trigger_from_args(const std::string& kind, const std::string& position, int size,
                              double value, int offset) {
  TriggerSpec t;
  if (kind == "patch")
    t.kind = TriggerSpec::Kind::Patch;
  else if (kind == "overwrite")
    t.kind = TriggerSpec::Kind::Overwrite;
  else
    throw ConfigError("trigger kind must be patch or overwrite, got " + kind);
  if (position == "up_left")
    t.position = TriggerSpec::Position::UpLeft;
  else if (position == "center")
    t.position = TriggerSpec::Position::Center;
  else if (position == "bottom_right")
    t.position = TriggerSpec::Position::BottomRight;
  else if (position == "explicit")
    t.position = TriggerSpec::Position::Explicit;
  else
    throw ConfigError("trigger position must be up_left, center, bottom_right or explicit");
  t.size = size;
  t.value = value;
  t.offset = offset;
  return t;
}

std::optional<GridShape> grid_from_arg(const py::object& grid) {
  if (grid.is_none()) return std::nullopt;
  auto t = grid.cast<std::pair<int, int>>();
  return GridShape{t.first, t.second};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "vertical federated learning sandbox: training, backdoor attacks, defenses";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<AlignmentError>(m, "AlignmentError", PyExc_ValueError);
  py::register_exception<ProtocolError>(m, "ProtocolError", PyExc_RuntimeError);

  m.def("defaults", [] { return json_to_py(config_defaults()); },
        "full experiment config defaults tree");

  m.def(
      "make_blobs",
      [](int classes, int per_class, int dims, double separation, uint64_t seed) {
        Dataset ds = make_synthetic_blobs(classes, per_class, dims, separation, seed);
        py::dict out;
        out["features"] = matrix_to_array(ds.features);
        out["labels"] = py::cast(ds.labels);
        out["ids"] = py::cast(ds.sample_ids);
        return out;
      },
      py::arg("classes"), py::arg("per_class"), py::arg("dims"), py::arg("separation"),
      py::arg("seed"),
      "gaussian class clusters; minimum pairwise mean distance equals separation");

  m.def(
      "load_idx",
      [](const std::string& images, const std::string& labels, int64_t limit) {
        Dataset ds = load_idx_images(images, labels, limit);
        py::dict out;
        out["features"] = matrix_to_array(ds.features);
        out["labels"] = py::cast(ds.labels);
        out["ids"] = py::cast(ds.sample_ids);
        out["grid"] = ds.grid ? py::object(py::make_tuple(ds.grid->h, ds.grid->w))
                              : py::object(py::none());
        return out;
      },
      py::arg("images"), py::arg("labels"), py::arg("limit") = -1,
      "big-endian IDX image/label pair, pixels scaled to [0, 1]");

  m.def(
      "even_ranges",
      [](int width, int parties) {
        VerticalSplitSpec s = VerticalSplitSpec::even(width, parties);
        return s.ranges;
      },
      py::arg("width"), py::arg("parties"),
      "contiguous per-party column ranges, remainder to the first parties");

  m.def(
      "split_columns",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& features,
         const std::vector<std::pair<int, int>>& ranges) {
        Matrix f = array_to_matrix(features);
        VerticalSplitSpec spec{ranges};
        spec.validate(f.cols);
        Dataset ds;
        ds.features = f;
        ds.sample_ids.resize(static_cast<size_t>(f.rows));
        for (int i = 0; i < f.rows; ++i) ds.sample_ids[static_cast<size_t>(i)] = i;
        ds.labels.assign(static_cast<size_t>(f.rows), 0);
        ds.class_count = 1;
        py::list out;
        for (const auto& sh : vertical_split(ds, spec)) out.append(matrix_to_array(sh.features));
        return out;
      },
      py::arg("features"), py::arg("ranges"), "split feature columns into party shards");

  m.def(
      "apply_trigger",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& row,
         const std::string& kind, const std::string& position, int size, double value,
         const py::object& grid, int offset) {
        if (row.ndim() != 1) throw InputError("expected a 1-d feature row");
        std::vector<double> v(row.data(), row.data() + row.size());
        apply_trigger(std::span<double>(v), trigger_from_args(kind, position, size, value, offset),
                      grid_from_arg(grid));
        py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
        std::copy(v.begin(), v.end(), out.mutable_data());
        return out;
      },
      py::arg("row"), py::arg("kind") = "overwrite", py::arg("position") = "center",
      py::arg("size") = 2, py::arg("value") = 1.0, py::arg("grid") = py::none(),
      py::arg("offset") = -1, "stamp the trigger pattern into one feature row");

  m.def(
      "cosine_similarity",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        return cosine_similarity(a, b);
      },
      py::arg("a"), py::arg("b"), "cos(a, b); 0 when either vector is all zero");

  m.def(
      "gaussian_noise",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& block,
         double variance, uint64_t seed) {
        Rng rng(seed);
        return matrix_to_array(apply_noise(array_to_matrix(block), variance, rng));
      },
      py::arg("block"), py::arg("variance"), py::arg("seed") = 77,
      "returned-gradient defense: add iid zero-mean gaussian noise");

  m.def(
      "compress_top_k",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& block,
         double keep_fraction) {
        return matrix_to_array(apply_compression(array_to_matrix(block), keep_fraction));
      },
      py::arg("block"), py::arg("keep_fraction"),
      "returned-gradient defense: keep the largest-magnitude fraction, zero the rest");

  m.def(
      "softmax_cross_entropy",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& logits,
         const std::vector<int>& labels) {
        CeResult r = softmax_cross_entropy(array_to_matrix(logits), labels);
        return py::make_tuple(r.loss, matrix_to_array(r.grad_logits));
      },
      py::arg("logits"), py::arg("labels"), "mean cross-entropy loss and logit gradients");

  m.def(
      "run_experiment",
      [](const py::object& config, const py::object& seed, const py::object& out_dir) {
        json user = py::isinstance<py::str>(config)
                        ? json::parse(config.cast<std::string>())
                        : py_to_json(config);
        ExperimentConfig cfg = config_from_json(user);
        uint64_t s = seed.is_none() ? cfg.run.seed : seed.cast<uint64_t>();
        std::string out = out_dir.is_none() ? cfg.run.out_dir : out_dir.cast<std::string>();
        RunRecord rec = run_single(cfg, s, out);
        append_csv_rows(out, rec.csv_rows);
        py::dict d;
        d["kind"] = rec.kind;
        d["fingerprint"] = rec.fingerprint;
        d["seed"] = rec.seed;
        d["tar"] = rec.metrics.tar;
        d["asr"] = rec.metrics.asr;
        d["benign_tar"] = rec.metrics.benign_tar ? py::object(py::float_(*rec.metrics.benign_tar))
                                                 : py::object(py::none());
        d["detection_precision"] =
            rec.metrics.detection_precision
                ? py::object(py::float_(*rec.metrics.detection_precision))
                : py::object(py::none());
        d["poisoned_count"] = rec.metrics.poisoned_count;
        d["poison_label_histogram"] = py::cast(rec.metrics.sdd_confusion);
        d["run_dir"] = rec.run_dir;
        return d;
      },
      py::arg("config"), py::arg("seed") = py::none(), py::arg("out_dir") = py::none(),
      "run one experiment (dict or JSON string config) and return its metrics");

  m.def(
      "fingerprint",
      [](const py::object& config) {
        json user = py::isinstance<py::str>(config) ? json::parse(config.cast<std::string>())
                                                    : py_to_json(config);
        return config_fingerprint(config_from_json(user).resolved);
      },
      py::arg("config"), "stable hash of the resolved config, seed-independent");
}
