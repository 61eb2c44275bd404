#include "peri/error.hpp"

namespace peri {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::UnsupportedDatatype: return "UnsupportedDatatype";
    case ErrorKind::MalformedHeader: return "MalformedHeader";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::TruncatedData: return "TruncatedData";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::DuplicateCaseId: return "DuplicateCaseId";
    case ErrorKind::UnknownSplit: return "UnknownSplit";
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::DegenerateInput: return "DegenerateInput";
    case ErrorKind::InsufficientSeeds: return "InsufficientSeeds";
    case ErrorKind::EmptyMask: return "EmptyMask";
    case ErrorKind::BothEmpty: return "BothEmpty";
    case ErrorKind::NoValidPairs: return "NoValidPairs";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::SingleClassTraining: return "SingleClassTraining";
    case ErrorKind::SingleClass: return "SingleClass";
    case ErrorKind::InvalidRange: return "InvalidRange";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::UnsupportedModel: return "UnsupportedModel";
    case ErrorKind::NumericalFailure: return "NumericalFailure";
  }
  return "Unknown";
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidRange:
    case ErrorKind::InvalidArgument:
    case ErrorKind::UnsupportedModel:
      return 1;
    case ErrorKind::NumericalFailure:
      return 3;
    default:
      return 2;
  }
}

}  // namespace peri
