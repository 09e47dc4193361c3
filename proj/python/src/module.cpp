#include "minimax_iv/bench.hpp"
#include "minimax_iv/config_io.hpp"
#include "minimax_iv/dgp.hpp"
#include "minimax_iv/model_io.hpp"
#include "minimax_iv/shape.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <optional>
#include <sstream>
#include <string>

namespace py = pybind11;
using namespace minimax_iv;

namespace {

// A fitted model with the diagnostics of its training run.
struct PyModel {
  std::shared_ptr<Model> model;
  std::vector<std::pair<std::string, double>> diagnostics;

  Vector predict(const Matrix& x) const {
    if (x.cols() != model->input_dim())
      throw InvalidInput("predict: expected " + std::to_string(model->input_dim()) + " columns");
    py::gil_scoped_release release;
    return model->predict_rows(x);
  }
};

Matrix as_matrix(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() == 1) {
    Matrix m(a.shape(0), 1);
    for (py::ssize_t i = 0; i < a.shape(0); ++i) m(i, 0) = a.at(i);
    return m;
  }
  if (a.ndim() != 2) throw InvalidInput("expected a 1-d or 2-d array");
  Matrix m(a.shape(0), a.shape(1));
  for (py::ssize_t i = 0; i < a.shape(0); ++i)
    for (py::ssize_t j = 0; j < a.shape(1); ++j) m(i, j) = a.at(i, j);
  return m;
}

bench::EstimatorSpec spec_from(const std::string& estimator, const std::optional<std::string>& config_json) {
  Json j = config_json ? Json::parse(*config_json) : Json::object();
  if (!j.is_object()) throw InvalidInput("config must be a JSON object");
  if (!j.contains("kind")) j["kind"] = estimator;
  bench::EstimatorSpec spec = estimator_spec_from_json(j);
  if (bench::to_string(spec.kind) != estimator)
    throw InvalidInput("config kind '" + bench::to_string(spec.kind) + "' does not match estimator '" + estimator + "'");
  spec.validate();
  return spec;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Minimax instrumental-variable estimators (compiled core)";

  py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<SingularMatrix>(m, "SingularMatrix", PyExc_ArithmeticError);

  py::class_<PyModel>(m, "Model")
      .def("predict", &PyModel::predict, py::arg("x"), "Predictions for each row of x.")
      .def_property_readonly("input_dim", [](const PyModel& p) { return p.model->input_dim(); })
      .def_property_readonly("kind", [](const PyModel& p) { return model_kind(*p.model); })
      .def_property_readonly("diagnostics",
                             [](const PyModel& p) {
                               py::dict d;
                               for (const auto& [k, v] : p.diagnostics) d[py::str(k)] = v;
                               return d;
                             })
      .def("save", [](const PyModel& p, const std::string& path) { save_model(*p.model, path); }, py::arg("path"))
      .def("dumps", [](const PyModel& p) {
        std::ostringstream out;
        save_model(*p.model, out);
        return out.str();
      });

  m.def(
      "load_model",
      [](const std::string& path) { return PyModel{std::shared_ptr<Model>(load_model(path)), {}}; },
      py::arg("path"));

  m.def(
      "fit",
      [](const std::string& estimator, const py::array_t<double>& y, const py::array_t<double>& x,
         const py::array_t<double>& z, const std::optional<std::string>& config_json, std::uint64_t seed) {
        const Matrix ym = as_matrix(y);
        if (ym.cols() != 1) throw InvalidInput("y must be one-dimensional");
        const Dataset data(ym.col(0), as_matrix(x), as_matrix(z));
        const bench::EstimatorSpec spec = spec_from(estimator, config_json);
        bench::FitResult r;
        {
          py::gil_scoped_release release;
          r = bench::fit_estimator(data, spec, seed);
        }
        return PyModel{std::shared_ptr<Model>(std::move(r.model)), std::move(r.diagnostics)};
      },
      py::arg("estimator"), py::arg("y"), py::arg("x"), py::arg("z"), py::arg("config_json") = std::nullopt,
      py::arg("seed") = 0);

  m.def(
      "generate",
      [](const std::string& fname, Eigen::Index n, Eigen::Index n_x, Eigen::Index n_z, double strength,
         std::uint64_t seed) {
        dgp::DgpConfig cfg{n, n_x, n_z, strength, fname, seed};
        const dgp::Generated g = dgp::generate(cfg);
        return py::make_tuple(Vector(g.data.y()), Matrix(g.data.x()), Matrix(g.data.z()));
      },
      py::arg("fname"), py::arg("n") = 300, py::arg("n_x") = 1, py::arg("n_z") = 1, py::arg("strength") = 0.6,
      py::arg("seed") = 0);

  m.def(
      "true_function",
      [](const std::string& fname, const Vector& x, std::uint64_t seed) {
        const dgp::TrueFunction h0(fname, seed);
        Vector out(x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) out(i) = h0(x(i));
        return out;
      },
      py::arg("fname"), py::arg("x"), py::arg("seed") = 0);

  m.def("function_names", &dgp::function_names);
  m.def("estimator_names", &bench::estimator_kind_names);
  m.def("preset_names", &bench::preset_names);

  m.def(
      "evaluate_mse",
      [](const PyModel& model, const std::string& fname, Eigen::Index n_x, Eigen::Index n_z, double strength,
         std::uint64_t data_seed, Eigen::Index n_test, std::uint64_t seed) {
        dgp::DgpConfig cfg{1, n_x, n_z, strength, fname, data_seed};
        cfg.validate();
        return dgp::evaluate_mse(*model.model, cfg, dgp::TrueFunction(fname, data_seed), n_test, seed);
      },
      py::arg("model"), py::arg("fname"), py::arg("n_x") = 1, py::arg("n_z") = 1, py::arg("strength") = 0.6,
      py::arg("data_seed") = 0, py::arg("n_test") = 10000, py::arg("seed") = 0);

  m.def(
      "pav",
      [](const Vector& values, const std::optional<Vector>& weights) {
        return weights ? shape::pav(values, *weights) : shape::pav(values);
      },
      py::arg("values"), py::arg("weights") = std::nullopt);

  m.def(
      "preset_json", [](const std::string& name) { return to_json(bench::preset(name)).dump(2); }, py::arg("name"));

  m.def(
      "run_benchmark",
      [](const std::string& spec_json, int jobs) {
        const bench::BenchSpec spec = bench_spec_from_json(Json::parse(spec_json));
        spec.validate();
        bench::BenchResult r;
        {
          py::gil_scoped_release release;
          r = bench::run_benchmark(spec, jobs);
        }
        return bench::results_csv(r, true);
      },
      py::arg("spec_json"), py::arg("jobs") = 0,
      "Runs a benchmark described by a JSON spec; returns the long-format CSV with timing omitted.");
}
