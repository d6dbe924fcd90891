#include "qpvs/error.hpp"

namespace qpvs {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Parse: return "Parse";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DuplicateColumnName: return "DuplicateColumnName";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::TooManyPredictors: return "TooManyPredictors";
    case ErrorCode::NonPositiveDispersion: return "NonPositiveDispersion";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::WrongFamily: return "WrongFamily";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::NotNested: return "NotNested";
    case ErrorCode::TooFewBins: return "TooFewBins";
    case ErrorCode::OptimizerDiverged: return "OptimizerDiverged";
    case ErrorCode::SingularHessian: return "SingularHessian";
    case ErrorCode::SingularU: return "SingularU";
  }
  return "Unknown";
}

bool is_numeric_failure(ErrorCode code) noexcept {
  return code == ErrorCode::OptimizerDiverged || code == ErrorCode::SingularHessian ||
         code == ErrorCode::SingularU;
}

void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace qpvs
