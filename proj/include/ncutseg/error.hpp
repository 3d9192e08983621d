#pragma once

#include <stdexcept>
#include <string>

namespace ncutseg {

/// Broad error classes. Each maps onto one CLI exit code.
enum class ErrorKind { validation, convergence, io };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ErrorKind::validation, what) {}
};

/// Bad magic or unknown version in a binary file.
class FormatError : public ValidationError {
 public:
  explicit FormatError(const std::string& what) : ValidationError("format error: " + what) {}
};

/// Header fields disagree with each other or with the payload length.
class CorruptionError : public ValidationError {
 public:
  explicit CorruptionError(const std::string& what) : ValidationError("corrupt file: " + what) {}
};

/// Input outside the mathematical domain of an operation (zero vector, empty set, ...).
class DomainError : public ValidationError {
 public:
  explicit DomainError(const std::string& what) : ValidationError("domain error: " + what) {}
};

/// Problem exceeds a configured size cap.
class SizeError : public ValidationError {
 public:
  explicit SizeError(const std::string& what) : ValidationError("size error: " + what) {}
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double best_residual)
      : Error(ErrorKind::convergence, what + " (best residual " + std::to_string(best_residual) + ")"),
        best_residual_(best_residual) {}
  double best_residual() const noexcept { return best_residual_; }

 private:
  double best_residual_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::io, "I/O error: " + what) {}
};

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::validation: return 2;
    case ErrorKind::convergence: return 3;
    case ErrorKind::io: return 4;
  }
  return 1;
}

}  // namespace ncutseg
