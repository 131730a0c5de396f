// Copyright (c) 2026 The relgrad Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "relgrad/cli.hpp"
#include "relgrad/csv.hpp"
#include "relgrad/executor.hpp"
#include "relgrad/fixtures.hpp"
#include "relgrad/train.hpp"

namespace py = pybind11;
using namespace relgrad;

namespace {

PyObject* g_error = nullptr;

py::tuple key_tuple(const Key& k) {
  py::tuple t(k.arity());
  for (std::size_t i = 0; i < k.arity(); ++i) t[i] = k[i];
  return t;
}

py::object value_object(const Value& v) {
  if (v.shape().is_scalar()) return py::float_(v.as_scalar());
  std::vector<py::ssize_t> shape(v.shape().dims().begin(), v.shape().dims().end());
  py::array_t<double> a(shape);
  std::copy(v.data().begin(), v.data().end(), a.mutable_data());
  return std::move(a);
}

// Stored tuples as {key tuple: float or ndarray}.
py::dict relation_dict(const Relation& r) {
  py::dict d;
  for (const Entry& e : r.entries()) d[key_tuple(e.key)] = value_object(e.value);
  return d;
}

py::dict gradients_dict(const LoadedPlan& lp, const GradientReport& rep) {
  py::dict d;
  for (int s : lp.lowered.trainable_slots()) {
    d[py::str(lp.lowered.slot_names[static_cast<std::size_t>(s) - 1])] = relation_dict(rep.gradient(s));
  }
  return d;
}

class Plan {
 public:
  explicit Plan(LoadedPlan lp) : lp_(std::move(lp)) {}

  static Plan from_file(const std::filesystem::path& path, std::uint64_t seed) { return Plan(load_plan_file(path, seed)); }

  static Plan from_text(const std::string& text, const std::map<std::string, std::string>& files, std::uint64_t seed) {
    FileResolver r = [files](const std::string& p) {
      auto it = files.find(p);
      if (it == files.end()) fail(ErrorCode::IoError, "no file '" + p + "'");
      return it->second;
    };
    return Plan(load_plan(text, r, seed));
  }

  std::vector<std::string> inputs() const { return lp_.lowered.slot_names; }

  std::vector<std::string> trainable() const {
    std::vector<std::string> out;
    for (int s : lp_.lowered.trainable_slots()) out.push_back(lp_.lowered.slot_names[static_cast<std::size_t>(s) - 1]);
    return out;
  }

  py::dict input(const std::string& name) const { return relation_dict(slot(name)); }

  py::dict run() const { return relation_dict(execute_no_tape(lp_.annotated, lp_.lowered.inputs)); }

  std::string run_csv() const { return format_relation_csv(execute_no_tape(lp_.annotated, lp_.lowered.inputs)); }

  py::tuple grad(bool optimize) const {
    const GradientReport rep = raautodiff(lp_.annotated, lp_.lowered.inputs, AutodiffOptions{optimize});
    py::dict stats;
    stats["fragments"] = rep.stats.fragments;
    stats["backward_nodes"] = rep.stats.backward_nodes;
    stats["o1"] = rep.stats.o1;
    stats["o2"] = rep.stats.o2;
    stats["o3"] = rep.stats.o3;
    return py::make_tuple(rep.loss(), gradients_dict(lp_, rep), stats);
  }

  std::string grad_csv(const std::string& name, bool optimize) const {
    const GradientReport rep = raautodiff(lp_.annotated, lp_.lowered.inputs, AutodiffOptions{optimize});
    return format_relation_csv(rep.gradient(slot_of(name)));
  }

  py::dict check_gradients(double h, const std::string& scheme, double atol, double rtol, bool optimize,
                           std::size_t fd_limit) const {
    FDConfig cfg;
    cfg.h = h;
    cfg.scheme = parse_scheme(scheme);
    cfg.atol = atol;
    cfg.rtol = rtol;
    const GradcheckReport rep = gradcheck(lp_, cfg, AutodiffOptions{optimize}, fd_limit);
    py::dict d;
    d["passed"] = rep.passed;
    d["max_abs_err"] = rep.max_abs_err;
    d["max_rel_err"] = rep.max_rel_err;
    d["entries"] = rep.entries.size();
    if (!rep.entries.empty()) {
      const auto& w = rep.entries[rep.worst];
      d["worst"] = py::make_tuple(w.input, key_tuple(w.key), w.element, w.autodiff, w.fd);
    }
    d["summary"] = rep.summary();
    return d;
  }

  std::vector<double> train(double lr, int epochs, bool optimize) {
    TrainResult r = train_sgd(lp_.annotated, lp_.lowered.inputs, lp_.lowered.trainable_slots(), TrainConfig{lr, epochs},
                              AutodiffOptions{optimize});
    lp_.lowered.inputs = std::move(r.inputs);
    return r.losses;
  }

  std::size_t num_nodes() const { return lp_.annotated.plan.size(); }
  std::string text() const { return pretty_print(lp_.doc); }

 private:
  int slot_of(const std::string& name) const {
    const auto& names = lp_.lowered.slot_names;
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) fail(ErrorCode::UnknownName, "no scanned input named '" + name + "'");
    return static_cast<int>(it - names.begin()) + 1;
  }
  const Relation& slot(const std::string& name) const {
    return lp_.lowered.inputs[static_cast<std::size_t>(slot_of(name)) - 1];
  }

  LoadedPlan lp_;
};

py::list diagnostics(const std::string& text) {
  py::list out;
  for (const Diagnostic& d : parse_plan(text).diagnostics) {
    out.append(py::make_tuple(std::string(error_code_name(d.code)), d.line, d.column, d.reason));
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Reverse-mode differentiation of relational query plans.";

  g_error = PyErr_NewException("relgrad.RelgradError", PyExc_RuntimeError, nullptr);
  m.attr("RelgradError") = py::handle(g_error);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object inst = py::reinterpret_steal<py::object>(PyObject_CallFunction(g_error, "s", e.what()));
      inst.attr("code") = std::string(error_code_name(e.code()));
      PyErr_SetObject(g_error, inst.ptr());
    }
  });

  py::class_<Plan>(m, "Plan")
      .def_static("from_file", &Plan::from_file, py::arg("path"), py::arg("seed") = 42)
      .def_static("from_text", &Plan::from_text, py::arg("text"), py::arg("files") = std::map<std::string, std::string>{},
                  py::arg("seed") = 42)
      .def_property_readonly("inputs", &Plan::inputs)
      .def_property_readonly("trainable", &Plan::trainable)
      .def_property_readonly("num_nodes", &Plan::num_nodes)
      .def_property_readonly("text", &Plan::text)
      .def("input", &Plan::input, py::arg("name"))
      .def("run", &Plan::run)
      .def("run_csv", &Plan::run_csv)
      .def("grad", &Plan::grad, py::arg("optimize") = true)
      .def("grad_csv", &Plan::grad_csv, py::arg("name"), py::arg("optimize") = true)
      .def("gradcheck", &Plan::check_gradients, py::arg("h") = 1e-5, py::arg("scheme") = "central",
           py::arg("atol") = 1e-4, py::arg("rtol") = 1e-3, py::arg("optimize") = true,
           py::arg("fd_limit") = kDefaultFdLimit)
      .def("train", &Plan::train, py::arg("lr") = 0.1, py::arg("epochs") = 100, py::arg("optimize") = true);

  m.def("diagnostics", &diagnostics, py::arg("text"));
  m.def("pretty_print", [](const std::string& text) { return pretty_print(parse_plan_or_throw(text)); },
        py::arg("text"));
  m.def("kernel_names", &kernel_names);
  m.def("fixture_names", &fixture_names);
  m.def(
      "write_fixture",
      [](const std::string& name, const std::filesystem::path& dir, std::uint64_t seed) {
        write_fixture(make_fixture(name, seed), dir);
        return dir / kPlanFileName;
      },
      py::arg("name"), py::arg("dir"), py::arg("seed") = 42);
  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = run_cli(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));
  register_fixture_kernels();
}
