#pragma once

#include <stdexcept>
#include <string>

namespace ars {

/// Invalid configuration detected before or during setup (bad sizes, bad
/// hyperparameter combinations, unknown environment names, ...).
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// A caller broke an operation's precondition (dimension mismatch, non-finite
/// input where finite input is required).
class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

/// An iterative solver failed to reach its tolerance.
class SolverFailure : public std::runtime_error {
 public:
  explicit SolverFailure(const std::string& what) : std::runtime_error(what) {}
};

/// Least-squares regression with a rank-deficient design.
class SingularEstimate : public std::runtime_error {
 public:
  explicit SingularEstimate(const std::string& what) : std::runtime_error(what) {}
};

/// A rollout failed inside a worker; carries the batch ordinal of the item.
class BatchError : public std::runtime_error {
 public:
  BatchError(std::size_t item, const std::string& what)
      : std::runtime_error("work item " + std::to_string(item) + ": " + what), item_(item) {}

  std::size_t item() const noexcept { return item_; }

 private:
  std::size_t item_;
};

}  // namespace ars
