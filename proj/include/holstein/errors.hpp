#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace holstein {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or out-of-contract input (shapes, ranges, flags).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A NaN/Inf appeared where a finite value is required.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// A physical invariant broke during integration (e.g. trace drift).
class IntegrityError : public Error {
 public:
  IntegrityError(const std::string& what, std::size_t step)
      : Error(what + " (at step " + std::to_string(step) + ")"), step_(step) {}
  explicit IntegrityError(const std::string& what) : Error(what), step_(0) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what + " (last residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Surrogate rollout produced a non-finite state.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t step)
      : Error(what + " (at rollout step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Container-format failures, reported distinctly.
class FormatError : public IoError {
 public:
  using IoError::IoError;
};
class VersionMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};
class TruncationError : public FormatError {
 public:
  using FormatError::FormatError;
};
class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};
class PayloadIntegrityError : public FormatError {
 public:
  using FormatError::FormatError;
};

class DegenerateDataError : public Error {
 public:
  using Error::Error;
};

}  // namespace holstein
