#include "spc/error.hpp"

namespace spc {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonBinaryTreatment: return "NonBinaryTreatment";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::DegenerateTreatmentArm: return "DegenerateTreatmentArm";
    case ErrorCode::TooFewUnits: return "TooFewUnits";
    case ErrorCode::InfeasibleStratification: return "InfeasibleStratification";
    case ErrorCode::DegenerateData: return "DegenerateData";
    case ErrorCode::NonSymmetric: return "NonSymmetric";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::MismatchedUnits: return "MismatchedUnits";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::RelevanceViolation: return "RelevanceViolation";
    case ErrorCode::NonPositivePilot: return "NonPositivePilot";
    case ErrorCode::NoTreatedUnits: return "NoTreatedUnits";
    case ErrorCode::UnknownFlag: return "UnknownFlag";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::ConflictingOptions: return "ConflictingOptions";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::FileNotFound: return "FileNotFound";
    case ErrorCode::ZeroDenominator: return "ZeroDenominator";
    case ErrorCode::AllCandidatesFailed: return "AllCandidatesFailed";
    case ErrorCode::RankDeficientDesign: return "RankDeficientDesign";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
  }
  return "Unknown";
}

bool is_validation_error(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ZeroDenominator:
    case ErrorCode::AllCandidatesFailed:
    case ErrorCode::RankDeficientDesign:
    case ErrorCode::Infeasible:
    case ErrorCode::NumericalFailure:
      return false;
    default:
      return true;
  }
}

}  // namespace spc
