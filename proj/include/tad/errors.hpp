#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tad {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// A precondition of an operation was not met by the caller.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Symmetric factorization failed even at the largest permitted jitter.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, std::string context = {})
      : Error(context.empty() ? what : what + " [" + context + "]"),
        context_(std::move(context)) {}

  const std::string& context() const noexcept { return context_; }

 private:
  std::string context_;
};

class OptimizationFailure : public Error {
 public:
  using Error::Error;
};

// Raised by interactive campaigns when a step needs observations that have
// not been supplied yet. The campaign state is left untouched.
class AwaitingObservations : public Error {
 public:
  using Error::Error;
};

class UnsupportedVersion : public Error {
 public:
  explicit UnsupportedVersion(int version)
      : Error("unsupported state format_version " + std::to_string(version)),
        version_(version) {}
  int version() const noexcept { return version_; }

 private:
  int version_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t byte_offset)
      : Error(what + " (at byte " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}
  std::size_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

}  // namespace tad
