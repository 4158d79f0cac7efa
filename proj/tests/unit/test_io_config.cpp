#include <cmath>
#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "doctest.h"

#include "cdd/config.hpp"
#include "cdd/errors.hpp"
#include "cdd/trace_io.hpp"

using namespace cdd;
namespace fs = std::filesystem;

namespace {

Trace sample_trace() {
  Trace t;
  t.n_shots = 2000;
  for (int i = 0; i < 40; ++i) {
    t.abscissa.push_back(0.05 * i);
    t.mean_p0.push_back(0.5 + 0.4 * std::cos(0.7 * i) / 3.0);
    t.std_error.push_back(0.011 + 1e-4 * i);
  }
  t.metadata["kind"] = "dressed_mp";
  return t;
}

std::string key_path_of(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ConfigError& e) {
    return e.key_path();
  }
  return "<accepted>";
}

std::size_t line_of(const std::string& text) {
  try {
    parse_trace_csv(text);
  } catch (const IoError& e) {
    return e.line();
  }
  return 0;
}

const char* kMinimal = R"({
  "system": { "omega_khz": 581, "a_par_khz": -150 },
  "noise": { "magnetic": { "gamma_sigma_b_khz": 42 } }
})";

fs::path scratch_dir() {
  const auto d = fs::temp_directory_path() / ("cdd_io_test_" + std::to_string(::getpid()));
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("trace CSV round trip is exact") {
  const Trace t = sample_trace();
  const std::string csv = format_trace_csv(t);
  CHECK(csv.rfind(std::string(kTraceHeader) + "\n", 0) == 0);
  const Trace back = parse_trace_csv(csv);
  CHECK(back.abscissa == t.abscissa);
  CHECK(back.mean_p0 == t.mean_p0);
  CHECK(back.std_error == t.std_error);
  CHECK(back.n_shots == t.n_shots);
  CHECK(format_trace_csv(back) == csv);
}

TEST_CASE("malformed CSV reports the line") {
  const std::string h = std::string(kTraceHeader) + "\n";
  CHECK(line_of("x,y\n0,0.5,0.01,10\n") == 1);
  CHECK(line_of(h + "0,0.5,0.01,10\n1,0.5,0.01\n") == 3);
  CHECK(line_of(h + "0,0.5,0.01,10\n1,abc,0.01,10\n") == 3);
  CHECK(line_of(h + "0,0.5,0.01,10\n1,1.5,0.01,10\n") == 3);
  CHECK(line_of(h + "0,0.5,-0.01,10\n") == 2);
  CHECK(line_of(h + "0,0.5,0.01,10\n0,0.5,0.01,10\n") == 3);
  CHECK(line_of(h + "0,0.5,0.01,10\n1,0.5,0.01,11\n") == 3);
  CHECK(line_of("") == 1);
}

TEST_CASE("trace files with sidecar") {
  const auto dir = scratch_dir();
  const auto path = dir / "nested" / "trace.csv";
  Trace t = sample_trace();
  write_trace(path, t, {{"seed", 7}});
  REQUIRE(fs::exists(path));
  REQUIRE(fs::exists(dir / "nested" / "trace.csv.json"));
  const Trace back = read_trace(path);
  CHECK(back.mean_p0 == t.mean_p0);
  CHECK(back.metadata["kind"] == "dressed_mp");
  CHECK(back.metadata["seed"] == 7);
  CHECK(back.metadata["n_points"] == 40);
  CHECK_THROWS_AS(read_trace(dir / "missing.csv"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("number formatting round-trips") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0}) CHECK(std::stod(format_double(v)) == v);
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a").size() == 16);
}

TEST_CASE("config round trip") {
  for (const char* name : {"nv1.json", "nv2.json"}) {
    CAPTURE(name);
    const auto c = load_config(fs::path(CDD_CONFIG_DIR) / name);
    CHECK(parse_config(nlohmann::json::parse(to_json(c).dump())) == c);
    CHECK(to_json(parse_config(nlohmann::json::parse(to_json(c).dump()))).dump() == to_json(c).dump());
  }
  const auto m = parse_config_text(kMinimal);
  CHECK(parse_config(nlohmann::json::parse(to_json(m).dump())) == m);
}

TEST_CASE("presets carry the calibration anchors") {
  const auto nv2 = load_config(fs::path(CDD_CONFIG_DIR) / "nv2.json");
  CHECK(nv2.system.omega_khz == 581.0);
  CHECK(std::abs(nv2.system.a_par_khz) == 150.0);
  CHECK(nv2.gamma() * nv2.sigma_b_mg() / (2 * M_PI) * 1e3 == doctest::Approx(41.68).epsilon(1e-3));
  const auto nv1 = load_config(fs::path(CDD_CONFIG_DIR) / "nv1.json");
  CHECK(std::abs(nv1.system.a_par_khz) == 145.0);
}

TEST_CASE("config errors name the key") {
  CHECK(key_path_of(kMinimal) == "<accepted>");
  CHECK(key_path_of("{ not json") == "<root>");
  CHECK(key_path_of(R"({"system": {"a_par_khz": 1}, "noise": {"magnetic": {"sigma_b_mg": 1}}})") ==
        "system.omega_khz");
  CHECK(key_path_of(R"({"system": {"omega_khz": 1, "a_par_khz": 1, "colour": 3},
                        "noise": {"magnetic": {"sigma_b_mg": 1}}})") == "system.colour");
  CHECK(key_path_of(R"({"system": {"omega_khz": "fast", "a_par_khz": 1},
                        "noise": {"magnetic": {"sigma_b_mg": 1}}})") == "system.omega_khz");
  CHECK(key_path_of(R"({"system": {"omega_khz": 1, "a_par_khz": 1},
                        "noise": {"magnetic": {"sigma_b_mg": 1, "t2_0m1_us": 5}}})") == "noise.magnetic");
  CHECK(key_path_of(R"({"system": {"omega_khz": 1, "a_par_khz": 1},
                        "noise": {"magnetic": {"sigma_b_mg": 1},
                                  "amplitude": {"model": "reflectometer", "eta": 1.5, "alpha_khz": -133}}})") ==
        "noise.amplitude.eta");
  CHECK(key_path_of(R"({"system": {"omega_khz": 1, "a_par_khz": 1},
                        "noise": {"magnetic": {"sigma_b_mg": 1}},
                        "grids": {"tau_us": {"start": 0, "stop": 10, "step": 0}}})") == "grids.tau_us.step");
  CHECK(key_path_of(R"({"system": {"omega_khz": 1, "a_par_khz": 1},
                        "noise": {"magnetic": {"sigma_b_mg": 1}},
                        "grids": {"omega_scan_khz": [100, -5]}})") == "grids.omega_scan_khz[1]");
  CHECK(key_path_of(R"({"system": {"omega_khz": 1, "a_par_khz": 1},
                        "noise": {"magnetic": {"sigma_b_mg": 1}},
                        "simulation": {"carbon_weights": [0.6, 0.6]}})") == "simulation.carbon_weights");
  CHECK(key_path_of(R"({"system": {"omega_khz": 1, "a_par_khz": 1},
                        "noise": {"magnetic": {"sigma_b_mg": 1}},
                        "simulation": {"shots": 0}})") == "simulation.shots");
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), IoError);
}

TEST_CASE("grid ranges include the stop value") {
  ScenarioConfig::Range r{0.0, 30.0, 0.05};
  const auto v = r.values();
  CHECK(v.size() == 601);
  CHECK(v.back() == doctest::Approx(30.0));
  CHECK(ScenarioConfig::Range{-600.0, 600.0, 5.0}.values().size() == 241);
}
