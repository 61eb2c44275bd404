#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace peri {

enum class ErrorKind {
  // input data problems
  UnsupportedDatatype,
  MalformedHeader,
  DimensionMismatch,
  TruncatedData,
  IoError,
  ParseError,
  DuplicateCaseId,
  UnknownSplit,
  MissingFile,
  // degenerate inputs to an algorithm
  DegenerateInput,
  InsufficientSeeds,
  EmptyMask,
  BothEmpty,
  NoValidPairs,
  TooFewSamples,
  SingleClassTraining,
  SingleClass,
  // caller mistakes
  InvalidRange,
  InvalidArgument,
  UnsupportedModel,
  // numerics
  NumericalFailure,
};

std::string_view to_string(ErrorKind kind);

/// Exit status the command line maps an error to: 1 usage, 2 data, 3 numerical.
int exit_code_for(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace peri
