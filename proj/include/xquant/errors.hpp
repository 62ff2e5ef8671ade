#pragma once

#include <stdexcept>
#include <string>

namespace xquant {

// Base for every error raised by the library. The CLI maps ArgumentError and
// ConfigError to usage failures and everything else to data failures.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Bad magic, unsupported version or dtype, inconsistent header fields.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Payload shorter than the header promises.
class LengthError : public Error {
 public:
  using Error::Error;
};

// Non-finite values or shape violations in otherwise well-formed input.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A quantized cache whose share links do not resolve to stored codes.
class StructuralError : public Error {
 public:
  using Error::Error;
};

// Input sits on a boundary where the answer depends on the rounding tie rule.
class AmbiguityError : public Error {
 public:
  using Error::Error;
};

}  // namespace xquant
