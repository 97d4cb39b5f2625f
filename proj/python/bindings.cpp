#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <kondo_eof/experiment.hpp>
#include <kondo_eof/nrg.hpp>
#include <kondo_eof/two_qubit.hpp>
#include <kondo_eof/verification.hpp>
#include <kondo_eof/yosida.hpp>

namespace py = pybind11;
using namespace kondo_eof;

PYBIND11_MODULE(_core, m) {
  m.doc() = "Entanglement-of-formation bounds for Kondo clouds";
  m.attr("__version__") = version_string();

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<InsufficientDataError>(m, "InsufficientDataError", PyExc_RuntimeError);
  py::register_exception<OutOfRangeError>(m, "OutOfRangeError", PyExc_RuntimeError);

  m.def("concurrence", [](const Mat4c& rho) { return concurrence(rho); }, py::arg("rho"));
  m.def("eof", [](const Mat4c& rho) { return eof(rho); }, py::arg("rho"),
        "closed-form entanglement of formation of a two-qubit density, in ebits");
  m.def("eof_from_concurrence", &eof_from_concurrence, py::arg("c"));

  m.def("kondo_temperature", [](double J) {
    ModelSpec s;
    s.J = J;
    return kondo_temperature_1ck(s);
  }, py::arg("J") = 0.3);

  py::class_<YosidaState>(m, "YosidaState")
      .def_readonly("D", &YosidaState::D)
      .def_readonly("E_Y", &YosidaState::E_Y)
      .def_readonly("xi", &YosidaState::xi);
  m.def("yosida_state", [](double J) {
    ModelSpec s;
    s.J = J;
    return yosida_state(s);
  }, py::arg("J") = 0.3);
  m.def("outside_probability", [](double L, const YosidaState& s) {
    const OutsideProbability o = outside_probability(L, s);
    return py::make_tuple(o.p, o.asymptotic);
  }, py::arg("L"), py::arg("state"), "(p, xi / (pi L)) for a cloud cut at L");
  m.def("yosida_eof", &yosida_eof, py::arg("p"));

  py::class_<PowerLawFit>(m, "PowerLawFit")
      .def_readonly("exponent", &PowerLawFit::exponent)
      .def_readonly("prefactor", &PowerLawFit::prefactor)
      .def_readonly("window_lo", &PowerLawFit::window_lo)
      .def_readonly("window_hi", &PowerLawFit::window_hi)
      .def_readonly("residual", &PowerLawFit::residual)
      .def_readonly("points", &PowerLawFit::points);
  m.def("fit_power_law",
        [](const std::vector<double>& x, const std::vector<double>& y, double lo, double hi) {
          return fit_power_law(x, y, lo, hi);
        },
        py::arg("x"), py::arg("eof"), py::arg("lo"), py::arg("hi"));
  m.def("cloud_size", [](const std::vector<double>& L, const std::vector<double>& e, double drop) {
    return cloud_size(L, e, drop).L;
  }, py::arg("L"), py::arg("eof"), py::arg("drop") = 0.1);

  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def("set", &RunConfig::set, py::arg("key"), py::arg("value"))
      .def("entries", &RunConfig::entries)
      .def("validate", &RunConfig::validate)
      .def("hash", &RunConfig::hash);
  m.def("preset", &preset, py::arg("name"));
  m.def("config_keys", &config_keys);
  m.def("_run_experiment", [](const RunConfig& cfg, int workers, const Logger& log) {
    py::gil_scoped_release release;
    const ExperimentResult r = run_experiment(cfg, workers, [&](const std::string& s) {
      if (!log) return;
      py::gil_scoped_acquire acquire;
      log(s);
    });
    return manifest(r).dump();
  }, py::arg("config"), py::arg("workers") = 1, py::arg("log") = Logger{});

  m.def("_verify", [](int states, std::uint64_t seed) {
    VerifyOptions opt;
    opt.two_qubit_states = states;
    opt.seed = seed;
    py::list out;
    for (const Check& c : verification_suite(opt))
      out.append(py::dict(py::arg("name") = c.name, py::arg("passed") = c.passed, py::arg("worst") = c.value,
                          py::arg("tolerance") = c.tolerance, py::arg("detail") = c.detail));
    return out;
  }, py::arg("states") = 1000, py::arg("seed") = 2024);
}
