#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"

#include "cdd/trace_io.hpp"

namespace fs = std::filesystem;

namespace {

std::string env(const char* name) {
  const char* v = std::getenv(name);
  REQUIRE_MESSAGE(v != nullptr, name << " must point at the build artifacts");
  return v;
}

struct Scratch {
  fs::path dir = fs::temp_directory_path() / ("cdd_cli_test_" + std::to_string(::getpid()));
  Scratch() { fs::create_directories(dir); }
  ~Scratch() { fs::remove_all(dir); }
};

int run(const std::string& args, std::string* output = nullptr) {
  const fs::path log = fs::temp_directory_path() / ("cdd_cli_log_" + std::to_string(::getpid()));
  const std::string cmd = env("CDD_CLI") + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (output) *output = cdd::read_text(log);
  fs::remove(log);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string preset(const char* name) { return "--config " + env("CDD_CONFIGS") + "/" + name; }

std::string body_without_comments(const fs::path& p) { return cdd::read_text(p); }

}  // namespace

TEST_CASE("rates command prints the calibration anchors") {
  Scratch s;
  std::string out;
  REQUIRE(run(preset("nv2.json") + " --out " + s.dir.string() + " rates", &out) == 0);
  CHECK(out.find("41.68") != std::string::npos);
  CHECK(out.find("12.1") != std::string::npos);
  CHECK(out.find("108.5") != std::string::npos);
  CHECK(fs::exists(s.dir / "rates.txt"));
  REQUIRE(run(preset("nv2.json") + " --omega 0 --out " + s.dir.string() + " rates", &out) == 0);
  CHECK(out.find("2.7") != std::string::npos);
}

TEST_CASE("exit codes") {
  Scratch s;
  const std::string out = " --out " + s.dir.string();
  SUBCASE("config errors exit 2") {
    CHECK(run("--config /nonexistent.json rates") == 2);
    CHECK(run(preset("nv2.json") + out + " frobnicate") == 2);
    const fs::path bad = s.dir / "bad.json";
    std::ofstream(bad) << R"({"system": {"omega_khz": 1}})";
    std::string msg;
    CHECK(run("--config " + bad.string() + out + " rates", &msg) == 2);
    CHECK(msg.find("system.a_par_khz") != std::string::npos);
    const fs::path empty_scan = s.dir / "empty.json";
    std::ofstream(empty_scan) << R"({"system": {"omega_khz": 581, "a_par_khz": -150},
      "noise": {"magnetic": {"t2_0m1_us": 5.4}}, "grids": {"omega_scan_khz": []}})";
    CHECK(run("--config " + empty_scan.string() + out + " t2scan --no-mc") == 2);
  }
  SUBCASE("i/o errors exit 4") {
    CHECK(run(preset("nv2.json") + out + " fit --model ramsey_mp --input " + (s.dir / "none.csv").string()) == 4);
    const fs::path broken = s.dir / "broken.csv";
    std::ofstream(broken) << "abscissa,mean_p0,stderr,n_shots\n0,0.5,0.01,10\n0.1,oops,0.01,10\n";
    std::string msg;
    CHECK(run(preset("nv2.json") + out + " fit --model ramsey_mp --p0-ud 0.97 --input " + broken.string(), &msg) == 4);
    CHECK(msg.find("line 3") != std::string::npos);
    CHECK(run(preset("nv2.json") + " --out /proc/cdd_no_such_dir rates") == 4);
  }
  SUBCASE("a fit that cannot converge exits 3") {
    const fs::path flat = s.dir / "flat.csv";
    std::ofstream f(flat);
    f << "abscissa,mean_p0,stderr,n_shots\n";
    for (int i = 0; i < 200; ++i) f << 0.05 * i << ",0.5,0.01,100\n";
    f.close();
    CHECK(run(preset("nv2.json") + out + " fit --model ramsey_mp --p0-ud 0.97 --input " + flat.string()) == 3);
  }
}

TEST_CASE("ramsey output is deterministic and re-fits") {
  Scratch s;
  const std::string common = preset("nv2.json") + " --shots 40 --seed 3 --tau-stop 20 --tau-step 0.05";
  REQUIRE(run(common + " --out " + (s.dir / "a").string() + " ramsey --kind dressed_mp") == 0);
  REQUIRE(run(common + " --threads 1 --out " + (s.dir / "b").string() + " ramsey --kind dressed_mp") == 0);
  const auto a = s.dir / "a" / "ramsey_dressed_mp.csv";
  const auto b = s.dir / "b" / "ramsey_dressed_mp.csv";
  REQUIRE(fs::exists(a));
  CHECK(body_without_comments(a) == body_without_comments(b));
  CHECK(fs::exists(s.dir / "a" / "ramsey_dressed_mp.csv.json"));
  CHECK(fs::exists(s.dir / "a" / "ramsey_dressed_mp_fft.csv"));
  CHECK(fs::exists(s.dir / "a" / "ramsey_dressed_mp_fit.txt"));

  // the written trace goes back through the fit command unchanged
  std::string msg;
  CHECK(run(preset("nv2.json") + " --out " + (s.dir / "c").string() + " fit --model ramsey_mp --input " +
                a.string(), &msg) == 0);
  const auto original = cdd::read_text(s.dir / "a" / "ramsey_dressed_mp_fit.txt");
  const auto refit = cdd::read_text(s.dir / "c" / "ramsey_dressed_mp_ramsey_mp_fit.txt");
  auto omega_line = [](const std::string& report) {
    std::istringstream in(report);
    std::string line;
    while (std::getline(in, line))
      if (line.rfind("omega ", 0) == 0) return line;
    return std::string{};
  };
  CHECK_FALSE(omega_line(original).empty());
  CHECK(omega_line(original) == omega_line(refit));
}

TEST_CASE("envelope and analytic scan") {
  Scratch s;
  REQUIRE(run(preset("nv2.json") + " --out " + s.dir.string() + " envelope") == 0);
  const auto table = cdd::read_text(s.dir / "envelope.csv");
  CHECK(table.rfind("tau_us,", 0) == 0);
  REQUIRE(run(preset("nv2.json") + " --out " + s.dir.string() + " t2scan --no-mc") == 0);
  const auto scan = cdd::read_text(s.dir / "t2scan.csv");
  CHECK(scan.find("omega_khz") != std::string::npos);
}
