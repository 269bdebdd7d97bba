#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace faid {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Geometry or parameter vector violates a device rule.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration value; `key()` names the offending key when known.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string &msg)
      : Error(key.empty() ? msg : key + ": " + msg), key_(std::move(key)) {}

  const std::string &key() const { return key_; }

 private:
  std::string key_;
};

class SolverError : public Error {
 public:
  using Error::Error;
};

class NoGuidedModeError : public Error {
 public:
  using Error::Error;
};

class NonDifferentiableModel : public Error {
 public:
  using Error::Error;
};

class ExternalPredictorFailed : public Error {
 public:
  ExternalPredictorFailed(int status, const std::string &msg)
      : Error(msg), status_(status) {}

  int status() const { return status_; }

 private:
  int status_;
};

class ExternalPredictorTimeout : public Error {
 public:
  using Error::Error;
};

/// Predictor produced a file that parses but does not match the request.
class ExternalPredictorBadOutput : public Error {
 public:
  using Error::Error;
};

/// Malformed input file; `offset()` is the byte position of the problem.
class FormatError : public Error {
 public:
  FormatError(std::size_t offset, const std::string &msg)
      : Error(msg + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace faid
