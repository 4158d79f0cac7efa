#include "cdd/config.hpp"

#include <cmath>
#include <set>

#include "cdd/errors.hpp"
#include "cdd/trace_io.hpp"
#include "cdd/units.hpp"

namespace cdd {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

using json = nlohmann::json;

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

// Reads an object, tracking which keys were consumed so leftovers can be rejected.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  double number(const std::string& key, std::optional<double> fallback = std::nullopt) {
    const json* v = find(key, fallback.has_value());
    if (!v) return *fallback;
    if (!v->is_number()) throw ConfigError(join(path_, key), "expected a number");
    const double x = v->get<double>();
    if (!std::isfinite(x)) throw ConfigError(join(path_, key), "must be finite");
    return x;
  }

  std::uint64_t unsigned_int(const std::string& key, std::optional<std::uint64_t> fallback) {
    const json* v = find(key, fallback.has_value());
    if (!v) return *fallback;
    if (!v->is_number_unsigned()) throw ConfigError(join(path_, key), "expected a non-negative integer");
    return v->get<std::uint64_t>();
  }

  std::string string(const std::string& key, std::optional<std::string> fallback) {
    const json* v = find(key, fallback.has_value());
    if (!v) return *fallback;
    if (!v->is_string()) throw ConfigError(join(path_, key), "expected a string");
    return v->get<std::string>();
  }

  std::vector<double> numbers(const std::string& key, std::optional<std::vector<double>> fallback) {
    const json* v = find(key, fallback.has_value());
    if (!v) return *fallback;
    if (!v->is_array()) throw ConfigError(join(path_, key), "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      const json& e = (*v)[i];
      if (!e.is_number() || !std::isfinite(e.get<double>()))
        throw ConfigError(join(path_, key) + "[" + std::to_string(i) + "]", "expected a finite number");
      out.push_back(e.get<double>());
    }
    return out;
  }

  Reader object(const std::string& key) {
    const json* v = find(key, false);
    return Reader(*v, join(path_, key));
  }

  std::optional<Reader> optional_object(const std::string& key) {
    if (!has(key)) return std::nullopt;
    return object(key);
  }

  const std::string& path() const { return path_; }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!used_.count(k)) throw ConfigError(join(path_, k), "unknown key");
  }

 private:
  const json* find(const std::string& key, bool optional) {
    if (!j_.contains(key)) {
      if (optional) return nullptr;
      throw ConfigError(join(path_, key), "required key is missing");
    }
    used_.insert(key);
    return &j_.at(key);
  }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

ScenarioConfig::Range parse_range(Reader r, ScenarioConfig::Range fallback) {
  ScenarioConfig::Range out;
  out.start = r.number("start", fallback.start);
  out.stop = r.number("stop", fallback.stop);
  out.step = r.number("step", fallback.step);
  r.finish();
  return out;
}

nlohmann::ordered_json range_json(const ScenarioConfig::Range& r) {
  return {{"start", r.start}, {"stop", r.stop}, {"step", r.step}};
}

void check(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw ConfigError(path, what);
}

void check_range(const ScenarioConfig::Range& r, const std::string& path, bool non_negative) {
  check(r.step > 0.0, path + ".step", "must be > 0");
  check(r.stop >= r.start, path + ".stop", "must be >= start");
  if (non_negative) check(r.start >= 0.0, path + ".start", "must be >= 0");
  check((r.stop - r.start) / r.step < 1e6, path, "grid has more than 10^6 points");
}

}  // namespace

std::vector<double> ScenarioConfig::Range::values() const {
  std::vector<double> out;
  if (!(step > 0.0) || stop < start) return out;
  const auto n = static_cast<std::size_t>(std::floor((stop - start) / step * (1.0 + 1e-9) + 1e-9));
  out.reserve(n + 1);
  for (std::size_t i = 0; i <= n; ++i) out.push_back(start + static_cast<double>(i) * step);
  return out;
}

double ScenarioConfig::gamma() const {
  return units::gyromagnetic_from_mhz_per_gauss(system.gamma_mhz_per_gauss);
}

SystemParams ScenarioConfig::system_params() const {
  SystemParams::Spec s;
  s.gamma = gamma();
  s.d0 = units::from_ghz(system.d0_ghz);
  s.dd_dt = units::from_khz(system.dd_dt_khz_per_c);
  s.omega_mech = units::from_mhz(system.omega_mech_mhz);
  s.q_factor = system.q_factor;
  s.omega = units::from_khz(system.omega_khz);
  s.delta = units::from_khz(system.delta_khz);
  s.a_par = units::from_khz(system.a_par_khz);
  return SystemParams(s);
}

double ScenarioConfig::sigma_b_mg() const {
  return std::visit(overloaded{
                        [&](const FromT2& m) { return sigma_b_from_t2(m.t2_0m1_us, gamma()); },
                        [&](const FromRate& m) { return units::from_khz(m.gamma_sigma_b_khz) / gamma(); },
                        [](const FromField& m) { return m.sigma_b_mg; },
                    },
                    noise.magnetic);
}

NoiseSpec ScenarioConfig::noise_spec(double omega) const {
  NoiseSpec n;
  n.sigma_b = sigma_b_mg();
  n.sigma_t = noise.sigma_t_c;
  if (omega == 0.0) return n;
  n.amplitude_noise = std::visit(
      overloaded{
          [](const FixedAmplitude& f) -> AmplitudeNoise {
            return FixedAmplitudeNoise{units::from_khz(f.sigma_khz)};
          },
          [omega](const Reflectometer& r) -> AmplitudeNoise {
            return ReflectometerNoise{r.eta, units::from_khz(r.alpha_khz), omega};
          },
      },
      noise.amplitude);
  return n;
}

SimConfig ScenarioConfig::sim_config(double omega) const {
  SimConfig c;
  c.n_shots = simulation.shots;
  c.seed = simulation.seed;
  c.carbon_weights = {simulation.weight_up, simulation.weight_down};
  c.threads = simulation.threads;
  c.noise = noise_spec(omega);
  return c;
}

RamseyOptions ScenarioConfig::ramsey_options(RamseyKind kind) const {
  RamseyOptions o;
  const bool dq = kind == RamseyKind::dressed_mp || kind == RamseyKind::max_protection;
  o.omega_mag = units::from_khz(dq ? simulation.omega_mag_mp_khz : simulation.omega_mag_0p_khz);
  o.omega_rot = units::from_khz(simulation.omega_rot_khz);
  o.closing_phase = simulation.closing_phase_rad;
  return o;
}

void ScenarioConfig::validate() const {
  check(system.gamma_mhz_per_gauss > 0.0, "system.gamma_mhz_per_gauss", "must be > 0");
  check(system.d0_ghz > 0.0, "system.d0_ghz", "must be > 0");
  check(system.omega_mech_mhz > 0.0, "system.omega_mech_mhz", "must be > 0");
  check(system.q_factor > 0.0, "system.q_factor", "must be > 0");
  check(system.omega_khz >= 0.0, "system.omega_khz", "must be >= 0");
  std::visit(overloaded{
                 [](const FromT2& m) { check(m.t2_0m1_us > 0.0, "noise.magnetic.t2_0m1_us", "must be > 0"); },
                 [](const FromRate& m) {
                   check(m.gamma_sigma_b_khz >= 0.0, "noise.magnetic.gamma_sigma_b_khz", "must be >= 0");
                 },
                 [](const FromField& m) { check(m.sigma_b_mg >= 0.0, "noise.magnetic.sigma_b_mg", "must be >= 0"); },
             },
             noise.magnetic);
  check(noise.sigma_t_c >= 0.0, "noise.sigma_t_c", "must be >= 0");
  std::visit(overloaded{
                 [](const FixedAmplitude& f) { check(f.sigma_khz >= 0.0, "noise.amplitude.sigma_khz", "must be >= 0"); },
                 [](const Reflectometer& r) {
                   check(r.eta >= 0.0 && r.eta < 1.0, "noise.amplitude.eta", "must lie in [0, 1)");
                 },
             },
             noise.amplitude);
  check(simulation.shots >= 1, "simulation.shots", "must be >= 1");
  check(simulation.weight_up >= 0.0 && simulation.weight_down >= 0.0, "simulation.carbon_weights",
        "must be non-negative");
  check(std::abs(simulation.weight_up + simulation.weight_down - 1.0) <= 1e-12,
        "simulation.carbon_weights", "must sum to 1");
  check(simulation.omega_mag_0p_khz > 0.0, "simulation.omega_mag_0p_khz", "must be > 0");
  check(simulation.omega_mag_mp_khz > 0.0, "simulation.omega_mag_mp_khz", "must be > 0");
  check(simulation.omega_mag_spectrum_khz > 0.0, "simulation.omega_mag_spectrum_khz", "must be > 0");
  check(std::isfinite(simulation.closing_phase_rad), "simulation.closing_phase_rad", "must be finite");
  check_range(grids.tau_us, "grids.tau_us", true);
  check_range(grids.delta_mag_khz, "grids.delta_mag_khz", false);
  for (std::size_t i = 0; i < grids.omega_scan_khz.size(); ++i)
    check(grids.omega_scan_khz[i] >= 0.0, "grids.omega_scan_khz[" + std::to_string(i) + "]",
          "must be >= 0");
  check(!output_dir.empty(), "output_dir", "must not be empty");
}

ScenarioConfig parse_config(const json& j) {
  ScenarioConfig c;
  Reader root(j, "");
  c.name = root.string("name", std::string{});
  c.output_dir = root.string("output_dir", c.output_dir);

  {
    Reader s = root.object("system");
    auto& y = c.system;
    y.gamma_mhz_per_gauss = s.number("gamma_mhz_per_gauss", y.gamma_mhz_per_gauss);
    y.d0_ghz = s.number("d0_ghz", y.d0_ghz);
    y.dd_dt_khz_per_c = s.number("dd_dt_khz_per_c", y.dd_dt_khz_per_c);
    y.omega_mech_mhz = s.number("omega_mech_mhz", y.omega_mech_mhz);
    y.q_factor = s.number("q_factor", y.q_factor);
    y.omega_khz = s.number("omega_khz");
    y.delta_khz = s.number("delta_khz", 0.0);
    y.a_par_khz = s.number("a_par_khz");
    s.finish();
  }

  if (auto n = root.optional_object("noise")) {
    if (auto m = n->optional_object("magnetic")) {
      const int forms = m->has("t2_0m1_us") + m->has("gamma_sigma_b_khz") + m->has("sigma_b_mg");
      if (forms != 1)
        throw ConfigError(m->path(), "give exactly one of t2_0m1_us, gamma_sigma_b_khz, sigma_b_mg");
      if (m->has("t2_0m1_us"))
        c.noise.magnetic = ScenarioConfig::FromT2{m->number("t2_0m1_us")};
      else if (m->has("gamma_sigma_b_khz"))
        c.noise.magnetic = ScenarioConfig::FromRate{m->number("gamma_sigma_b_khz")};
      else
        c.noise.magnetic = ScenarioConfig::FromField{m->number("sigma_b_mg")};
      m->finish();
    }
    c.noise.sigma_t_c = n->number("sigma_t_c", 0.0);
    if (auto a = n->optional_object("amplitude")) {
      const std::string model = a->string("model", std::string("fixed"));
      if (model == "fixed") {
        c.noise.amplitude = ScenarioConfig::FixedAmplitude{a->number("sigma_khz", 0.0)};
      } else if (model == "reflectometer") {
        ScenarioConfig::Reflectometer r;
        r.eta = a->number("eta");
        r.alpha_khz = a->number("alpha_khz");
        c.noise.amplitude = r;
      } else {
        throw ConfigError(a->path() + ".model", "expected 'fixed' or 'reflectometer'");
      }
      a->finish();
    }
    n->finish();
  }

  if (auto s = root.optional_object("simulation")) {
    auto& y = c.simulation;
    y.shots = s->unsigned_int("shots", y.shots);
    y.seed = s->unsigned_int("seed", y.seed);
    y.threads = static_cast<unsigned>(s->unsigned_int("threads", y.threads));
    if (s->has("carbon_weights")) {
      const auto w = s->numbers("carbon_weights", std::nullopt);
      if (w.size() != 2) throw ConfigError(s->path() + ".carbon_weights", "expected [w_up, w_down]");
      y.weight_up = w[0];
      y.weight_down = w[1];
    }
    y.omega_mag_0p_khz = s->number("omega_mag_0p_khz", y.omega_mag_0p_khz);
    y.omega_mag_mp_khz = s->number("omega_mag_mp_khz", y.omega_mag_mp_khz);
    y.omega_mag_spectrum_khz = s->number("omega_mag_spectrum_khz", y.omega_mag_spectrum_khz);
    y.omega_rot_khz = s->number("omega_rot_khz", y.omega_rot_khz);
    y.closing_phase_rad = s->number("closing_phase_rad", y.closing_phase_rad);
    s->finish();
  }

  if (auto g = root.optional_object("grids")) {
    if (g->has("tau_us")) c.grids.tau_us = parse_range(g->object("tau_us"), c.grids.tau_us);
    c.grids.omega_scan_khz = g->numbers("omega_scan_khz", c.grids.omega_scan_khz);
    if (g->has("delta_mag_khz"))
      c.grids.delta_mag_khz = parse_range(g->object("delta_mag_khz"), c.grids.delta_mag_khz);
    g->finish();
  }
  root.finish();
  c.validate();
  return c;
}

ScenarioConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("malformed JSON: ") + e.what());
  }
  return parse_config(j);
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  return parse_config_text(read_text(path));
}

nlohmann::ordered_json to_json(const ScenarioConfig& c) {
  nlohmann::ordered_json j;
  if (!c.name.empty()) j["name"] = c.name;
  j["system"] = {{"gamma_mhz_per_gauss", c.system.gamma_mhz_per_gauss},
                 {"d0_ghz", c.system.d0_ghz},
                 {"dd_dt_khz_per_c", c.system.dd_dt_khz_per_c},
                 {"omega_mech_mhz", c.system.omega_mech_mhz},
                 {"q_factor", c.system.q_factor},
                 {"omega_khz", c.system.omega_khz},
                 {"delta_khz", c.system.delta_khz},
                 {"a_par_khz", c.system.a_par_khz}};
  nlohmann::ordered_json magnetic = std::visit(
      overloaded{
          [](const ScenarioConfig::FromT2& m) { return nlohmann::ordered_json{{"t2_0m1_us", m.t2_0m1_us}}; },
          [](const ScenarioConfig::FromRate& m) {
            return nlohmann::ordered_json{{"gamma_sigma_b_khz", m.gamma_sigma_b_khz}};
          },
          [](const ScenarioConfig::FromField& m) { return nlohmann::ordered_json{{"sigma_b_mg", m.sigma_b_mg}}; },
      },
      c.noise.magnetic);
  nlohmann::ordered_json amplitude = std::visit(
      overloaded{
          [](const ScenarioConfig::FixedAmplitude& f) {
            return nlohmann::ordered_json{{"model", "fixed"}, {"sigma_khz", f.sigma_khz}};
          },
          [](const ScenarioConfig::Reflectometer& r) {
            return nlohmann::ordered_json{{"model", "reflectometer"}, {"eta", r.eta}, {"alpha_khz", r.alpha_khz}};
          },
      },
      c.noise.amplitude);
  j["noise"] = {{"magnetic", magnetic}, {"sigma_t_c", c.noise.sigma_t_c}, {"amplitude", amplitude}};
  j["simulation"] = {{"shots", c.simulation.shots},
                     {"seed", c.simulation.seed},
                     {"threads", c.simulation.threads},
                     {"carbon_weights", {c.simulation.weight_up, c.simulation.weight_down}},
                     {"omega_mag_0p_khz", c.simulation.omega_mag_0p_khz},
                     {"omega_mag_mp_khz", c.simulation.omega_mag_mp_khz},
                     {"omega_mag_spectrum_khz", c.simulation.omega_mag_spectrum_khz},
                     {"omega_rot_khz", c.simulation.omega_rot_khz},
                     {"closing_phase_rad", c.simulation.closing_phase_rad}};
  j["grids"] = {{"tau_us", range_json(c.grids.tau_us)},
                {"omega_scan_khz", c.grids.omega_scan_khz},
                {"delta_mag_khz", range_json(c.grids.delta_mag_khz)}};
  j["output_dir"] = c.output_dir;
  return j;
}

}  // namespace cdd
