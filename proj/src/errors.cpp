#include "wavepax/errors.hpp"

namespace wavepax {

const char* error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::BandCrossing: return "BandCrossing";
    case ErrorCode::SpectrumOnSingularSet: return "SpectrumOnSingularSet";
    case ErrorCode::EnumerationCapExceeded: return "EnumerationCapExceeded";
    case ErrorCode::BandCrossingAtOutput: return "BandCrossingAtOutput";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::RadiusUnresolvable: return "RadiusUnresolvable";
    case ErrorCode::EnvelopeUnderresolved: return "EnvelopeUnderresolved";
    case ErrorCode::EmptySublevelSet: return "EmptySublevelSet";
    case ErrorCode::SublevelSetSplit: return "SublevelSetSplit";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::PicardDiverged: return "PicardDiverged";
    case ErrorCode::PicardMaxIter: return "PicardMaxIter";
    case ErrorCode::HypothesisViolated: return "HypothesisViolated";
    case ErrorCode::ParameterSignError: return "ParameterSignError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace wavepax
