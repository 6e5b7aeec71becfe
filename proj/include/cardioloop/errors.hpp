#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cardioloop {

// Invalid configuration or argument outside its documented domain.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed input stream (e.g. timestamps going backwards).
class StreamError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operation not permitted in the current lifecycle phase.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A metric was requested over data that carries no measurements.
class UndefinedMetricError : public std::domain_error {
 public:
  UndefinedMetricError() : std::domain_error("undefined metric") {}
  using std::domain_error::domain_error;
};

// File could not be opened or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Session log could not be parsed; `line` is 1-based.
class LogParseError : public std::runtime_error {
 public:
  LogParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace cardioloop
