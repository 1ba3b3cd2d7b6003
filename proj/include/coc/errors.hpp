#pragma once

#include <stdexcept>
#include <string>

namespace coc {

// Irrecoverable structural failure while bracketing indented blocks.
// Anything softer degrades to an Opaque statement instead.
class ParseError : public std::runtime_error {
public:
  ParseError(int line, const std::string& message)
      : std::runtime_error("line " + std::to_string(line) + ": " + message),
        line_(line) {}

  int line() const { return line_; }

private:
  int line_;
};

// No tagged delta line was found, or a value literal inside one was malformed.
class DeltaParseError : public std::runtime_error {
public:
  explicit DeltaParseError(const std::string& message, std::string fragment = "")
      : std::runtime_error(message), fragment_(std::move(fragment)) {}

  const std::string& fragment() const { return fragment_; }

private:
  std::string fragment_;
};

// The model produced unusable output twice (original attempt plus one retry).
class SimulationFailed : public std::runtime_error {
public:
  SimulationFailed(const std::string& message, std::string first_response,
                   std::string retry_response)
      : std::runtime_error(message),
        first_response_(std::move(first_response)),
        retry_response_(std::move(retry_response)) {}

  const std::string& first_response() const { return first_response_; }
  const std::string& retry_response() const { return retry_response_; }

private:
  std::string first_response_;
  std::string retry_response_;
};

class GenerationFailed : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Task file record failed validation.
class SchemaError : public std::runtime_error {
public:
  SchemaError(int line, const std::string& field, const std::string& message)
      : std::runtime_error("line " + std::to_string(line) + ", field '" + field +
                           "': " + message),
        line_(line),
        field_(field) {}

  int line() const { return line_; }
  const std::string& field() const { return field_; }

private:
  int line_;
  std::string field_;
};

class InsufficientExemplars : public std::runtime_error {
public:
  explicit InsufficientExemplars(const std::string& family)
      : std::runtime_error("not enough exemplars for family '" + family + "'"),
        family_(family) {}

  const std::string& family() const { return family_; }

private:
  std::string family_;
};

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Scripted backend had no fixture for a request, or a fixture file is malformed.
class FixtureError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// HTTP backend exhausted its retries or got an unusable response.
class BackendError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace coc
