#include "taskmri/errors.hpp"

namespace taskmri {

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

NumericalFailure::NumericalFailure(int cascade_index, const std::string& message)
    : Error(ErrorKind::NumericalFailure, message), cascade_index_(cascade_index) {}

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid input";
    case ErrorKind::InvalidBudget: return "invalid budget";
    case ErrorKind::GenerationFailure: return "generation failure";
    case ErrorKind::NumericalFailure: return "numerical failure";
    case ErrorKind::StagedTraining: return "staged training";
    case ErrorKind::Schema: return "schema";
    case ErrorKind::Integrity: return "integrity";
    case ErrorKind::Config: return "config";
    case ErrorKind::Io: return "i/o";
    case ErrorKind::UndefinedStatistic: return "undefined statistic";
    case ErrorKind::Contract: return "contract";
  }
  return "unknown";
}

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Schema:
    case ErrorKind::Integrity: return 3;
    case ErrorKind::NumericalFailure: return 4;
    case ErrorKind::Io: return 5;
    case ErrorKind::StagedTraining: return 6;
    case ErrorKind::Contract: return 7;
    default: return 1;
  }
}

}  // namespace taskmri
