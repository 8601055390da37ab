#pragma once

#include <stdexcept>
#include <string>

namespace adabn {

// Base class for every error raised by the library. Each category gets its
// own type so callers can catch precisely what they can handle.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Operand shapes do not fit the operation (messages name both shapes).
class ShapeError : public Error {
public:
  using Error::Error;
};

// A scalar argument is outside its valid range.
class ParameterError : public Error {
public:
  using Error::Error;
};

// Input data violates a contract (label out of range, empty batch, ...).
class DataError : public Error {
public:
  using Error::Error;
};

// A binary file does not match its documented layout.
class FormatError : public Error {
public:
  using Error::Error;
};

// Two inputs that must agree do not (e.g. image/label counts).
class ConsistencyError : public Error {
public:
  using Error::Error;
};

// An operation was invoked before the state it needs exists.
class StateError : public Error {
public:
  using Error::Error;
};

// A class required for calibration never appeared in the first epoch.
class CalibrationError : public Error {
public:
  using Error::Error;
};

// Resolved configuration is invalid as a whole or a value failed to parse.
class ConfigError : public Error {
public:
  using Error::Error;
};

// Command line misuse: unknown key, malformed override, bad subcommand.
class UsageError : public Error {
public:
  using Error::Error;
};

// Filesystem failure, carries the offending path.
class IoError : public Error {
public:
  using Error::Error;
};

// Non-finite value where the numeric contract forbids one.
class NumericError : public Error {
public:
  using Error::Error;
};

}  // namespace adabn
