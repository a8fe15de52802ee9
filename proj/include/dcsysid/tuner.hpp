#pragma once

// Empirical-Bayes tuning of (c, lambda, rho): minimize the marginal
// likelihood objective with Algorithm C as the inner evaluator, then return
// the MAP impulse response at the minimizer.
//
// The search runs on unconstrained coordinates z mapped into the box:
//   c      = exp(log lo + (log hi - log lo) * sigmoid(z0))
//   lambda = lo + (hi - lo) * sigmoid(z1)
//   rho    = mid + half_width * tanh(z2)
//   sigma2 = exp(z3)                          (joint policy only)

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dcsysid/kernel.hpp"
#include "dcsysid/likelihood.hpp"
#include "dcsysid/regression.hpp"

namespace dcsysid {

enum class SolverKind { derivative_free, gradient_assisted };

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct Sigma2Policy {
  enum class Kind { ls_residual, fixed, joint };
  Kind kind = Kind::ls_residual;
  double value = 0.0;  // used by `fixed`

  static Sigma2Policy ls_residual() { return {}; }
  static Sigma2Policy fixed(double v) { return {Kind::fixed, v}; }
  static Sigma2Policy joint() { return {Kind::joint, 0.0}; }
};

struct TunerConfig {
  SolverKind solver = SolverKind::derivative_free;
  Interval c_bounds{1e-6, 1e6};
  Interval lambda_bounds{1e-4, 1.0 - 1e-4};
  Interval rho_bounds{-1.0 + 1e-4, 1.0 - 1e-4};
  int restarts = 5;
  double tol_obj = 1e-8;
  double tol_x = 1e-6;
  int max_evals = 2000;  // per restart
  Sigma2Policy sigma2_policy;
  std::uint64_t seed = 0;
  /// Start points tried before the quasi-random design.
  std::vector<DcHyperparams> initial_points;

  /// Throws DomainError on an empty box, a box touching the singular
  /// boundary, restarts < 1 or non-positive tolerances/budgets.
  void validate() const;
};

struct RestartDiagnostics {
  DcHyperparams start;
  DcHyperparams end;
  double start_objective = 0.0;
  double objective = 0.0;
  double sigma2 = 0.0;
  int evaluations = 0;
  bool converged = false;
  std::string failure;  // empty when the restart produced a finite objective
};

struct TuningDiagnostics {
  int evaluations = 0;
  int winner = -1;
  double gradient_norm = 0.0;
  double seconds_per_evaluation = 0.0;
  std::vector<RestartDiagnostics> restarts;
  std::vector<std::string> warnings;
};

struct IdentificationResult {
  DcHyperparams hyper;
  double sigma2 = 0.0;
  Eigen::VectorXd g;
  double objective = 0.0;
  TuningDiagnostics diagnostics;
};

IdentificationResult tune(const RegressionData& data, const TunerConfig& cfg);

/// Same, for callers that already hold the compressed data and the noise
/// variance from least squares.
IdentificationResult tune(const PreprocessedData& pre, double sigma2_ls,
                          const std::optional<Eigen::VectorXd>& g_ls, const TunerConfig& cfg);

/// Normalized fit 100 (1 - |g_hat - g| / |g - mean(g)|), floored at
/// kFitFloor. Throws DomainError if g is constant or lengths differ.
double fit_metric(const Eigen::VectorXd& g_hat, const Eigen::VectorXd& g_true);

inline constexpr double kFitFloor = -1e6;

}  // namespace dcsysid
