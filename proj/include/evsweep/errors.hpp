#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace evsweep {

/// Malformed input text; carries the 1-based line number of the offending line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// A value violates a documented precondition or invariant.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Geometry that admits no stable answer (plane through a camera center, singular map).
class DegenerateGeometryError : public std::runtime_error {
 public:
  explicit DegenerateGeometryError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Query outside the covered domain (e.g. pose lookup past the trajectory ends).
class OutOfRangeError : public std::runtime_error {
 public:
  explicit OutOfRangeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A metric requested over an empty sample set.
class UndefinedMetricError : public std::runtime_error {
 public:
  explicit UndefinedMetricError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace evsweep
