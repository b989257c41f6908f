#pragma once

#include <stdexcept>
#include <string>

namespace slim {

// Every failure raised by the library derives from Error. The CLI maps the
// category onto its exit code (2 usage/config, 3 I/O, 4 numerical).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration, bad arguments, shape mismatches, schema violations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class ValidationError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class ParseError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Filesystem and on-disk format problems.
class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public IoError {
 public:
  using IoError::IoError;
};

class CorruptionError : public IoError {
 public:
  using IoError::IoError;
};

class LengthError : public IoError {
 public:
  using IoError::IoError;
};

// NaN/Inf, degenerate statistics, failed numerical preconditions.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace slim
