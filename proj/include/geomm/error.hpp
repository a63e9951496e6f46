#pragma once

#include <stdexcept>
#include <string>

namespace geomm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes of the operands do not agree.
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

// A caller broke a documented precondition (e.g. ascent direction passed to a line search).
class PreconditionViolation : public Error {
 public:
  using Error::Error;
};

// Linear algebra broke down: rank-deficient retraction, non-SPD metric, non-finite cost.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class UnknownLanguage : public Error {
 public:
  explicit UnknownLanguage(const std::string& lang) : Error("unknown language: " + lang) {}
};

// Malformed or unusable input data (files, dictionaries, graphs).
class DataError : public Error {
 public:
  using Error::Error;
};

// Model container failed version or checksum validation.
class IntegrityError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace geomm
