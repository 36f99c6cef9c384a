#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace windgrid {

enum class ErrorKind {
  ParseError,
  EmptyRegistry,
  DuplicateCoordinate,
  DuplicateTurbine,
  UnknownTurbine,
  IrregularSampling,
  LatticeMismatch,
  LeadingGap,
  GapPresent,
  CellCollision,
  IncompleteSnapshot,
  InsufficientHistory,
  DegenerateVariable,
  ShapeError,
  EmptyMask,
  DivergenceError,
  CheckpointMismatch,
  EmptyTrainSet,
  InvalidConfig,
  LengthError,
  EmptySeries,
  IoError,
  FormatError,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::EmptyRegistry: return "EmptyRegistry";
    case ErrorKind::DuplicateCoordinate: return "DuplicateCoordinate";
    case ErrorKind::DuplicateTurbine: return "DuplicateTurbine";
    case ErrorKind::UnknownTurbine: return "UnknownTurbine";
    case ErrorKind::IrregularSampling: return "IrregularSampling";
    case ErrorKind::LatticeMismatch: return "LatticeMismatch";
    case ErrorKind::LeadingGap: return "LeadingGap";
    case ErrorKind::GapPresent: return "GapPresent";
    case ErrorKind::CellCollision: return "CellCollision";
    case ErrorKind::IncompleteSnapshot: return "IncompleteSnapshot";
    case ErrorKind::InsufficientHistory: return "InsufficientHistory";
    case ErrorKind::DegenerateVariable: return "DegenerateVariable";
    case ErrorKind::ShapeError: return "ShapeError";
    case ErrorKind::EmptyMask: return "EmptyMask";
    case ErrorKind::DivergenceError: return "DivergenceError";
    case ErrorKind::CheckpointMismatch: return "CheckpointMismatch";
    case ErrorKind::EmptyTrainSet: return "EmptyTrainSet";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::LengthError: return "LengthError";
    case ErrorKind::EmptySeries: return "EmptySeries";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::FormatError: return "FormatError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace windgrid
