#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fracdim {

enum class ErrorCode {
  SingularMatrix,
  NonFinite,
  NegativeS,
  NonContractiveH,
  InadmissibleWord,
  PointOutsideDomain,
  MeasureSupportMismatch,
  BudgetExceeded,
  NonNegativeExponent,
  InsufficientResolution,
  InvalidArgument,
  Config,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::SingularMatrix: return "SingularMatrix";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::NegativeS: return "NegativeS";
    case ErrorCode::NonContractiveH: return "NonContractiveH";
    case ErrorCode::InadmissibleWord: return "InadmissibleWord";
    case ErrorCode::PointOutsideDomain: return "PointOutsideDomain";
    case ErrorCode::MeasureSupportMismatch: return "MeasureSupportMismatch";
    case ErrorCode::BudgetExceeded: return "BudgetExceeded";
    case ErrorCode::NonNegativeExponent: return "NonNegativeExponent";
    case ErrorCode::InsufficientResolution: return "InsufficientResolution";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Config: return "Config";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace fracdim
