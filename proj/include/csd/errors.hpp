#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace csd {

// Base of every error raised by the library. Callers that only need to report
// a failure can catch this; the subclasses exist for callers that branch.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller supplied something that violates a documented precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Internal data is inconsistent (incomplete inference set, wrong embedding
// dimensionality, missing embedding).
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// Model output could not be interpreted. Keeps the raw text for the trace.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::string raw)
      : Error(what), raw_(std::move(raw)) {}
  explicit ParseError(const std::string& what) : Error(what) {}

  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

// Mathematical precondition failure (zero vector, empty sample).
class DomainError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

// Network or provider failure. `status` is the HTTP status when one was
// received; `retryable` tells the retry loop whether another attempt may help.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, std::optional<int> status, bool retryable)
      : Error(what), status_(status), retryable_(retryable) {}

  std::optional<int> status() const noexcept { return status_; }
  bool retryable() const noexcept { return retryable_; }

 private:
  std::optional<int> status_;
  bool retryable_;
};

}  // namespace csd
