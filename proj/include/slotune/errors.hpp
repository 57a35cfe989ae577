#pragma once

#include <stdexcept>
#include <string>

namespace slotune {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Space definition problems.
class SchemaError : public Error {
 public:
  using Error::Error;
};
class ValidationError : public Error {
 public:
  using Error::Error;
};
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};
class SamplingExhausted : public Error {
 public:
  using Error::Error;
};

// Surrogate / acquisition.
class SingularKernel : public Error {
 public:
  using Error::Error;
};
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Evaluation.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};
class EmptyTrace : public Error {
 public:
  using Error::Error;
};
class ConfigRenderError : public Error {
 public:
  using Error::Error;
};
class RobustnessFailed : public Error {
 public:
  using Error::Error;
};

// Orchestration.
class MissingReference : public Error {
 public:
  using Error::Error;
};
class NoValidObservations : public Error {
 public:
  using Error::Error;
};
class LogCorrupt : public Error {
 public:
  LogCorrupt(const std::string& what, std::size_t record)
      : Error("record " + std::to_string(record) + ": " + what), record_(record) {}
  std::size_t record() const noexcept { return record_; }

 private:
  std::size_t record_;
};

}  // namespace slotune
