#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cdd {

/// Invalid or incomplete scenario configuration. `key_path` names the
/// offending entry, e.g. "noise.amplitude.eta".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key_path, const std::string& what)
      : std::runtime_error(key_path + ": " + what), key_path_(std::move(key_path)) {}
  const std::string& key_path() const { return key_path_; }

 private:
  std::string key_path_;
};

/// A numerical procedure failed to produce a usable result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reading or writing an artifact failed. Parse errors carry a 1-based line.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Every rate in a budget was zero, so no finite dephasing time exists.
class UnboundedCoherence : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A pulse sequence violated its structural contract.
class SequenceError : public std::invalid_argument {
 public:
  SequenceError(std::size_t index, const std::string& what)
      : std::invalid_argument("segment " + std::to_string(index) + ": " + what), index_(index) {}
  std::size_t segment_index() const { return index_; }

 private:
  std::size_t index_;
};

}  // namespace cdd
