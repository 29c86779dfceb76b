#pragma once

#include <stdexcept>
#include <string>

namespace wavepax {

enum class ErrorCode {
  BandCrossing,
  SpectrumOnSingularSet,
  EnumerationCapExceeded,
  BandCrossingAtOutput,
  NotConverged,
  RadiusUnresolvable,
  EnvelopeUnderresolved,
  EmptySublevelSet,
  SublevelSetSplit,
  GridMismatch,
  PicardDiverged,
  PicardMaxIter,
  HypothesisViolated,
  ParameterSignError,
  InvalidArgument,
  IoError,
};

const char* error_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace wavepax
