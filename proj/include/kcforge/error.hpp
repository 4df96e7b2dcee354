#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace kcforge {

// Base of every exception thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input bytes (bad JSON line, wrong header, unparseable field).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Well-formed input that violates a documented constraint.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A caller broke an API contract (index out of range, dimension mismatch,
// label missing from a merge plan).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Mathematically undefined request (zero-norm vector, zero-variance t test).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Network or HTTP failure that survived the retry policy.
class TransportError : public Error {
 public:
  using Error::Error;
};

// File read/write failure.
class IoError : public Error {
 public:
  using Error::Error;
};

// An LLM or embedding response that could not be interpreted. Carries the
// raw payload so callers can persist it for debugging.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::string raw_response)
      : Error(what), raw_response_(std::move(raw_response)) {}

  const std::string& raw_response() const { return raw_response_; }

 private:
  std::string raw_response_;
};

// The optimizer ran out of iterations before reaching tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double last_gradient_norm)
      : Error(what), last_gradient_norm_(last_gradient_norm) {}

  double last_gradient_norm() const { return last_gradient_norm_; }

 private:
  double last_gradient_norm_;
};

}  // namespace kcforge
