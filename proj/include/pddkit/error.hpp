#pragma once

#include <stdexcept>
#include <string>

namespace pddkit {

enum class ErrorKind {
  DegenerateCell,
  InvalidInput,
  Overflow,
  GenerationFailed,
  SyntaxError,
  MissingTag,
  UnknownElement,
  EmptyMotif,
  LengthMismatch,
  KMismatch,
  Unbalanced,
  AllZeroWeights,
  ShapeMismatch,
  NonFiniteActivation,
  EmptyDataset,
  NonFiniteLoss,
  MissingElement,
  NotSymmetric,
  NegativeDistance,
  Io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DegenerateCell: return "DegenerateCell";
    case ErrorKind::InvalidInput: return "InvalidInput";
    case ErrorKind::Overflow: return "Overflow";
    case ErrorKind::GenerationFailed: return "GenerationFailed";
    case ErrorKind::SyntaxError: return "SyntaxError";
    case ErrorKind::MissingTag: return "MissingTag";
    case ErrorKind::UnknownElement: return "UnknownElement";
    case ErrorKind::EmptyMotif: return "EmptyMotif";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::KMismatch: return "KMismatch";
    case ErrorKind::Unbalanced: return "Unbalanced";
    case ErrorKind::AllZeroWeights: return "AllZeroWeights";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFiniteActivation: return "NonFiniteActivation";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::MissingElement: return "MissingElement";
    case ErrorKind::NotSymmetric: return "NotSymmetric";
    case ErrorKind::NegativeDistance: return "NegativeDistance";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

/// Base exception for every failure reported by the library. `kind()` is the
/// stable discriminator; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// Numerical failures map to exit code 3, everything else to 2.
  bool is_numerical() const noexcept {
    return kind_ == ErrorKind::NonFiniteActivation || kind_ == ErrorKind::NonFiniteLoss;
  }

 private:
  ErrorKind kind_;
};

/// Raised by the CIF reader; carries the 1-based position of the offending token.
class CifSyntaxError : public Error {
 public:
  CifSyntaxError(const std::string& what, int line, int column)
      : Error(ErrorKind::SyntaxError,
              what + " (line " + std::to_string(line) + ", column " + std::to_string(column) + ")"),
        line_(line),
        column_(column) {}

  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  int line_;
  int column_;
};

}  // namespace pddkit
