#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "cdd/pulse_sim.hpp"

namespace cdd {

inline constexpr std::string_view kTraceHeader = "abscissa,mean_p0,stderr,n_shots";

/// CSV body: header line then one row per point. Values use the shortest
/// representation that round-trips exactly.
std::string format_trace_csv(const Trace& trace);

/// Parses a trace CSV. Throws IoError carrying the 1-based line number.
Trace parse_trace_csv(std::string_view text);

/// Writes `path` and its metadata sidecar `path` + ".json". `extra` is merged
/// into the sidecar (config digest, timestamp, ...).
void write_trace(const std::filesystem::path& path, const Trace& trace,
                 const nlohmann::ordered_json& extra = nlohmann::ordered_json::object());

/// Reads a trace and, when present, its sidecar into Trace::metadata.
Trace read_trace(const std::filesystem::path& path);

/// Two-column CSV of a Fourier magnitude spectrum.
void write_spectrum_csv(const std::filesystem::path& path, const Spectrum& spectrum);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// Shortest round-trip decimal form of a double.
std::string format_double(double value);

/// 64-bit FNV-1a of a string, as 16 hex digits.
std::string fnv1a_hex(std::string_view text);

}  // namespace cdd
