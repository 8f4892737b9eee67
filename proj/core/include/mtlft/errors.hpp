#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace mtlft {

// Shape mismatch between arguments (vector lengths, matrix dims, mask sizes).
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Argument outside the mathematical domain of an operation
// (negative magnitudes, |rho| > 1, non-interior elasticity points, ...).
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// Per-feature scale collapsed to zero while the corresponding coefficient
// is nonzero; the scaled penalty diverges there.
struct SingularScaleError : std::domain_error {
  using std::domain_error::domain_error;
};

// Polynomial solve produced no admissible root, or a root failed the
// residual check after polishing.
struct RootNotFoundError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Hidden units with zero weight norm cannot be given a direction.
struct DegenerateUnitError : std::runtime_error {
  DegenerateUnitError(const std::string& what, std::vector<int> idx)
      : std::runtime_error(what), indices(std::move(idx)) {}
  std::vector<int> indices;
};

// Design matrix does not have full row rank; the affine constraint set is
// degenerate (or empty) and projection is not well defined.
struct RankError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A loss has no contributing terms (e.g. a task mask that selects no samples
// for some output), so its value and gradients are undefined.
struct DegenerateObjectiveError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Iterative solve exhausted its budget. Carries the last iterate so callers
// can inspect how far the solve got.
struct ConvergenceError : std::runtime_error {
  ConvergenceError(const std::string& what, Eigen::VectorXd iterate, double penalty)
      : std::runtime_error(what), last_iterate(std::move(iterate)), penalty_value(penalty) {}
  Eigen::VectorXd last_iterate;
  double penalty_value = 0.0;
};

// Malformed experiment config or preset request.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Checkpoint / result-table file could not be read or written.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace mtlft
