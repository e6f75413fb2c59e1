#pragma once

#include <stdexcept>
#include <string>

namespace taskmri {

enum class ErrorKind {
  InvalidInput,
  InvalidBudget,
  GenerationFailure,
  NumericalFailure,
  StagedTraining,
  Schema,
  Integrity,
  Config,
  Io,
  UndefinedStatistic,
  Contract,
};

/// Base error for everything the library throws on a violated contract.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised when activations stop being finite inside the unrolled network.
class NumericalFailure : public Error {
 public:
  NumericalFailure(int cascade_index, const std::string& message);

  /// Cascade at which the non-finite value was first observed; -1 if it was
  /// observed outside the cascades (sensitivity estimation, predictor, loss).
  int cascade_index() const noexcept { return cascade_index_; }

 private:
  int cascade_index_;
};

const char* to_string(ErrorKind kind) noexcept;

/// Process exit code used by the command-line tool for each error kind.
int exit_code(ErrorKind kind) noexcept;

}  // namespace taskmri
