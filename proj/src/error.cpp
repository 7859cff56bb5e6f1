#include "dcomp/error.hpp"

namespace dcomp {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::AllMassZero: return "AllMassZero";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonPositiveTemperature: return "NonPositiveTemperature";
    case ErrorCode::NoMaskedSlots: return "NoMaskedSlots";
    case ErrorCode::EmptyIntersection: return "EmptyIntersection";
    case ErrorCode::StateSpaceTooLarge: return "StateSpaceTooLarge";
    case ErrorCode::InvalidTable: return "InvalidTable";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::TokenOutOfRange: return "TokenOutOfRange";
    case ErrorCode::TooFewPatches: return "TooFewPatches";
    case ErrorCode::Format: return "Format";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace dcomp
