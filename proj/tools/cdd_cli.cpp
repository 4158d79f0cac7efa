#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cdd/commands.hpp"
#include "cdd/config.hpp"
#include "cdd/errors.hpp"
#include "cdd/trace_io.hpp"

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kNumerical = 3, kIo = 4 };

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> shots;
  std::optional<unsigned> threads;
  std::optional<std::string> out;
  std::optional<double> tau_start, tau_stop, tau_step;
  std::optional<double> dmag_start, dmag_stop, dmag_step;
  std::vector<double> omega_scan;
  std::optional<double> omega;
  std::optional<double> omega_rot;
  std::optional<double> closing_phase;
};

cdd::ScenarioConfig resolve(const GlobalOptions& g) {
  cdd::ScenarioConfig c = cdd::load_config(g.config);
  if (g.seed) c.simulation.seed = *g.seed;
  if (g.shots) c.simulation.shots = *g.shots;
  if (g.threads) c.simulation.threads = *g.threads;
  if (g.out) c.output_dir = *g.out;
  if (g.tau_start) c.grids.tau_us.start = *g.tau_start;
  if (g.tau_stop) c.grids.tau_us.stop = *g.tau_stop;
  if (g.tau_step) c.grids.tau_us.step = *g.tau_step;
  if (g.dmag_start) c.grids.delta_mag_khz.start = *g.dmag_start;
  if (g.dmag_stop) c.grids.delta_mag_khz.stop = *g.dmag_stop;
  if (g.dmag_step) c.grids.delta_mag_khz.step = *g.dmag_step;
  if (!g.omega_scan.empty()) c.grids.omega_scan_khz = g.omega_scan;
  if (g.omega) c.system.omega_khz = *g.omega;
  if (g.omega_rot) c.simulation.omega_rot_khz = *g.omega_rot;
  if (g.closing_phase) c.simulation.closing_phase_rad = *g.closing_phase;
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mechanically dressed NV spin: dephasing analytics, Monte-Carlo Ramsey and fitting"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config, "Scenario file (JSON)")->required()->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "RNG seed");
  app.add_option("--shots", g.shots, "Monte-Carlo shots per point")->check(CLI::PositiveNumber);
  app.add_option("--threads", g.threads, "Worker threads (0 = all cores)");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--tau-start", g.tau_start, "tau grid start, us");
  app.add_option("--tau-stop", g.tau_stop, "tau grid stop, us");
  app.add_option("--tau-step", g.tau_step, "tau grid step, us");
  app.add_option("--delta-mag-start", g.dmag_start, "magnetic detuning grid start, kHz");
  app.add_option("--delta-mag-stop", g.dmag_stop, "magnetic detuning grid stop, kHz");
  app.add_option("--delta-mag-step", g.dmag_step, "magnetic detuning grid step, kHz");
  app.add_option("--omega-scan", g.omega_scan, "Omega/2pi values, kHz")->delimiter(',');
  app.add_option("--omega", g.omega, "Omega/2pi, kHz");
  app.add_option("--omega-rot", g.omega_rot, "Phase advance rate omega_rot/2pi, kHz");
  app.add_option("--closing-phase", g.closing_phase, "Closing DQ pulse phase, rad");

  auto* rates = app.add_subcommand("rates", "Rate budget and predicted T2*");
  auto* t2scan = app.add_subcommand("t2scan", "T2* versus Omega: first, second order and Monte-Carlo");
  bool no_mc = false;
  t2scan->add_flag("--no-mc", no_mc, "Skip the Monte-Carlo column");
  auto* ramsey = app.add_subcommand("ramsey", "Simulate, transform and fit a Ramsey trace");
  std::string kind_name = "dressed_mp";
  ramsey->add_option("--kind", kind_name, "undressed_0m1 | dressed_0p | dressed_mp | max_protection")
      ->check(CLI::IsMember({"undressed_0m1", "dressed_0p", "dressed_mp", "max_protection"}));
  auto* spectra = app.add_subcommand("spectra", "Dressed and undressed spectroscopy with joint fits");
  auto* envelope = app.add_subcommand("envelope", "Tabulate decay envelopes");
  auto* fit = app.add_subcommand("fit", "Fit a model to a trace CSV");
  cdd::FitRequest request;
  std::string input, undressed;
  std::optional<double> p0;
  fit->add_option("--model", request.model, "Model name")->required()->check(
      CLI::IsMember(cdd::model_names()));
  fit->add_option("--input", input, "Trace CSV")->required();
  fit->add_option("--undressed", undressed, "Undressed trace CSV (spectrum_joint)");
  fit->add_option("--p0-ud", p0, "Undressed reference population, overrides the sidecar");
  fit->add_flag("--weighted", request.weighted, "Weight points by their standard error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    const cdd::ScenarioConfig config = resolve(g);
    const std::filesystem::path out = config.output_dir;
    if (*rates) return cdd::cmd_rates(config, out, std::cout);
    if (*t2scan) return cdd::cmd_t2scan(config, out, std::cout, !no_mc);
    if (*ramsey) return cdd::cmd_ramsey(config, cdd::ramsey_kind_from_string(kind_name), out, std::cout);
    if (*spectra) return cdd::cmd_spectra(config, out, std::cout);
    if (*envelope) return cdd::cmd_envelope(config, out, std::cout);
    if (*fit) {
      request.input = input;
      if (!undressed.empty()) request.undressed = undressed;
      request.p0_undressed = p0;
      return cdd::cmd_fit(config, request, out, std::cout);
    }
  } catch (const cdd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const cdd::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const cdd::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const cdd::UnboundedCoherence& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumerical;
  }
  return kOk;
}
