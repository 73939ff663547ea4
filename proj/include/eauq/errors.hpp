#pragma once

#include <stdexcept>
#include <string>

namespace eauq {

// Base class for every error raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller passed arguments that violate an operation's preconditions.
class InputError : public Error {
 public:
  using Error::Error;
};

// Data content failed validation (off-grid vote, missing label, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Malformed text that could not be parsed at all.
class ParseError : public Error {
 public:
  using Error::Error;
};

// A configuration object is internally inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss or gradient.
class TrainingDivergedError : public Error {
 public:
  TrainingDivergedError(const std::string& what, int epoch)
      : Error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

// An estimator that needs expert votes was invoked without them.
class MissingAnnotationError : public InputError {
 public:
  using InputError::InputError;
};

// Results that should share a test pool do not.
class AggregationError : public Error {
 public:
  using Error::Error;
};

// Filesystem trouble.
class IoError : public Error {
 public:
  using Error::Error;
};

// Command-line misuse that should exit with the usage status code.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace eauq
