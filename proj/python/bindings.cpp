// Python surface of the core library. Frequencies cross the boundary in kHz,
// times in us; configs travel as JSON text.

#include <string>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cdd/commands.hpp"
#include "cdd/config.hpp"
#include "cdd/dephasing.hpp"
#include "cdd/errors.hpp"
#include "cdd/fitting.hpp"
#include "cdd/trace_io.hpp"
#include "cdd/units.hpp"

namespace py = pybind11;
using namespace cdd;

namespace {

py::dict fit_dict(const FitOutcome& f) {
  py::dict d;
  d["model"] = f.model_id;
  d["status"] = std::string(to_string(f.status));
  py::dict params;
  for (std::size_t i = 0; i < f.names.size(); ++i)
    params[py::str(f.names[i])] = py::make_tuple(f.values[i], f.ci_low[i], f.ci_high[i], bool(f.free[i]));
  d["params"] = params;
  d["rss"] = f.rss;
  d["dof"] = f.dof;
  d["warnings"] = f.warnings;
  d["report"] = format_fit_report(f);
  return d;
}

py::dict trace_dict(const Trace& t) {
  py::dict d;
  d["abscissa"] = t.abscissa;
  d["mean_p0"] = t.mean_p0;
  d["stderr"] = t.std_error;
  d["n_shots"] = t.n_shots;
  d["csv"] = format_trace_csv(t);
  d["metadata"] = t.metadata.dump();
  return d;
}

double sigma_b_from_khz(double gamma_sigma_b_khz) {
  return units::from_khz(gamma_sigma_b_khz) / units::gyromagnetic_from_mhz_per_gauss(2.8);
}

ModelOrder order_from(const std::string& s) {
  if (s == "first") return ModelOrder::first;
  if (s == "second") return ModelOrder::second;
  throw std::invalid_argument("order must be 'first' or 'second'");
}

}  // namespace

PYBIND11_MODULE(_cddsim, m) {
  m.doc() = "Mechanically dressed NV spin: analytics, Monte-Carlo Ramsey and fitting";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<UnboundedCoherence>(m, "UnboundedCoherence", PyExc_ArithmeticError);

  m.def("load_config", [](const std::string& path) { return to_json(load_config(path)).dump(); },
        py::arg("path"), "Read and validate a scenario file; returns canonical JSON text.");
  m.def("normalize_config", [](const std::string& text) { return to_json(parse_config_text(text)).dump(); },
        py::arg("text"));

  m.def(
      "rates",
      [](const std::string& text) {
        const RatesReport r = rates_report(parse_config_text(text));
        py::dict d;
        d["gamma_sigma_b_khz"] = r.gamma_sigma_b_khz;
        d["sigma_b_mg"] = r.sigma_b_mg;
        d["t2_0m1_us"] = r.t2_0m1_us;
        d["t2_pm1_us"] = r.t2_pm1_us;
        d["thermal_t2_us"] = r.thermal_t2_us;
        d["cutoff_khz"] = r.cutoff_khz;
        d["sigma_omega_khz"] = r.sigma_omega_khz;
        d["t2_first_us"] = r.t2_first_us;
        d["t2_second_us"] = r.second.t2;
        d["text"] = format_rates(r);
        return d;
      },
      py::arg("config"));

  m.def(
      "predicted_t2_mp",
      [](double omega_khz, double a_par_khz, double gamma_sigma_b_khz, double sigma_omega_khz,
         const std::string& order) {
        return predicted_t2_mp(units::from_khz(omega_khz), units::from_khz(a_par_khz),
                               sigma_b_from_khz(gamma_sigma_b_khz), units::from_khz(sigma_omega_khz),
                               order_from(order), units::gyromagnetic_from_mhz_per_gauss(2.8))
            .t2;
      },
      py::arg("omega_khz"), py::arg("a_par_khz"), py::arg("gamma_sigma_b_khz"), py::arg("sigma_omega_khz") = 0.0,
      py::arg("order") = "first");

  m.def(
      "envelope_second_order",
      [](double tau_us, double omega_khz, double a_par_khz, double gamma_sigma_b_khz) {
        return envelope_second_order(tau_us, units::from_khz(omega_khz), sigma_b_from_khz(gamma_sigma_b_khz),
                                     units::from_khz(a_par_khz), units::gyromagnetic_from_mhz_per_gauss(2.8));
      },
      py::arg("tau_us"), py::arg("omega_khz"), py::arg("a_par_khz"), py::arg("gamma_sigma_b_khz"));

  m.def(
      "run_ramsey",
      [](const std::string& kind, const std::string& text) {
        const ScenarioConfig c = parse_config_text(text);
        RamseyResult r;
        {
          py::gil_scoped_release release;
          r = run_ramsey(ramsey_kind_from_string(kind), c);
        }
        py::dict d = trace_dict(r.trace);
        d["fit"] = fit_dict(r.fit);
        return d;
      },
      py::arg("kind"), py::arg("config"), "Simulate, transform and fit one Ramsey trace.");

  m.def(
      "envelope_table",
      [](const std::string& text) { return envelope_table_csv(parse_config_text(text)); },
      py::arg("config"));
}
