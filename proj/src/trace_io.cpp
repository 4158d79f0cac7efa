#include "cdd/trace_io.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cdd/errors.hpp"

namespace cdd {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <class T>
T parse_field(std::string_view field, std::size_t line, std::string_view column) {
  field = trim(field);
  T value{};
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size())
    throw IoError("cannot parse " + std::string(column) + " value '" + std::string(field) + "'",
                  line);
  return value;
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc{}) throw IoError("cannot format value");
  return std::string(buf, ptr);
}

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string format_trace_csv(const Trace& trace) {
  if (trace.mean_p0.size() != trace.size() || trace.std_error.size() != trace.size())
    throw IoError("trace columns differ in length");
  std::string out(kTraceHeader);
  out += '\n';
  for (std::size_t i = 0; i < trace.size(); ++i) {
    out += format_double(trace.abscissa[i]);
    out += ',';
    out += format_double(trace.mean_p0[i]);
    out += ',';
    out += format_double(trace.std_error[i]);
    out += ',';
    out += std::to_string(trace.n_shots);
    out += '\n';
  }
  return out;
}

Trace parse_trace_csv(std::string_view text) {
  Trace trace;
  std::size_t line_no = 0;
  bool header_seen = false;
  bool shots_seen = false;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != kTraceHeader)
        throw IoError("expected header '" + std::string(kTraceHeader) + "'", line_no);
      header_seen = true;
      continue;
    }
    std::array<std::string_view, 4> fields;
    std::size_t count = 0;
    while (true) {
      const auto comma = line.find(',');
      if (count == fields.size()) throw IoError("too many fields (expected 4)", line_no);
      fields[count++] = line.substr(0, comma);
      if (comma == std::string_view::npos) break;
      line.remove_prefix(comma + 1);
    }
    if (count != 4) throw IoError("expected 4 fields, found " + std::to_string(count), line_no);

    const double x = parse_field<double>(fields[0], line_no, "abscissa");
    const double p0 = parse_field<double>(fields[1], line_no, "mean_p0");
    const double se = parse_field<double>(fields[2], line_no, "stderr");
    const auto n = parse_field<std::size_t>(fields[3], line_no, "n_shots");
    if (!std::isfinite(x)) throw IoError("abscissa must be finite", line_no);
    if (!(p0 >= 0.0 && p0 <= 1.0)) throw IoError("mean_p0 must lie in [0, 1]", line_no);
    if (!(se >= 0.0)) throw IoError("stderr must be >= 0", line_no);
    if (!trace.abscissa.empty() && !(x > trace.abscissa.back()))
      throw IoError("abscissa must be strictly increasing", line_no);
    if (shots_seen && n != trace.n_shots)
      throw IoError("n_shots differs from earlier rows", line_no);
    trace.n_shots = n;
    shots_seen = true;
    trace.abscissa.push_back(x);
    trace.mean_p0.push_back(p0);
    trace.std_error.push_back(se);
  }
  if (!header_seen) throw IoError("empty file", 1);
  return trace;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void write_trace(const std::filesystem::path& path, const Trace& trace,
                 const nlohmann::ordered_json& extra) {
  write_text(path, format_trace_csv(trace));
  nlohmann::ordered_json meta = trace.metadata;
  meta["n_points"] = trace.size();
  meta["n_shots"] = trace.n_shots;
  for (const auto& [k, v] : extra.items()) meta[k] = v;
  std::filesystem::path sidecar = path;
  sidecar += ".json";
  write_text(sidecar, meta.dump(2) + "\n");
}

Trace read_trace(const std::filesystem::path& path) {
  Trace trace = parse_trace_csv(read_text(path));
  std::filesystem::path sidecar = path;
  sidecar += ".json";
  if (std::filesystem::exists(sidecar)) {
    try {
      trace.metadata = nlohmann::ordered_json::parse(read_text(sidecar));
    } catch (const nlohmann::json::parse_error& e) {
      throw IoError(sidecar.string() + ": " + e.what());
    }
  }
  return trace;
}

void write_spectrum_csv(const std::filesystem::path& path, const Spectrum& spectrum) {
  std::string out = "frequency_khz,magnitude\n";
  for (std::size_t k = 0; k < spectrum.frequency_khz.size(); ++k)
    out += format_double(spectrum.frequency_khz[k]) + "," + format_double(spectrum.magnitude[k]) + "\n";
  write_text(path, out);
}

}  // namespace cdd
