#pragma once

// FIR regression model y(t) = sum_{k=1..n} g(k) u(t - k) + v(t), t = 1..N,
// with u(t) = 0 for t < 1. In matrix form Y = Phi^T g + V, where Phi^T is
// the N x n regressor built here (row t holds u(t-1), ..., u(t-n)).

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dcsysid/errors.hpp"
#include "dcsysid/kernel.hpp"

namespace dcsysid {

using Index = Eigen::Index;

/// N x n regressor: entry (t, k) = u[t - k - 1] when t - k - 1 >= 0, else 0.
Eigen::MatrixXd build_regressor(const Eigen::VectorXd& u, Index n);

class RegressionData {
 public:
  RegressionData(Eigen::VectorXd u, Eigen::VectorXd y, Index n);

  const Eigen::VectorXd& u() const noexcept { return u_; }
  const Eigen::VectorXd& y() const noexcept { return y_; }
  /// The N x n matrix Phi^T.
  const Eigen::MatrixXd& phi_t() const noexcept { return phi_t_; }
  Index n() const noexcept { return n_; }
  Index samples() const noexcept { return y_.size(); }

  /// Non-fatal remarks on the problem shape (e.g. n > N).
  std::vector<std::string> diagnostics() const;

 private:
  Eigen::VectorXd u_;
  Eigen::VectorXd y_;
  Index n_;
  Eigen::MatrixXd phi_t_;
};

/// Noiseless convolution plus i.i.d. N(0, sigma2) noise from Rng(seed).
Eigen::VectorXd simulate_fir(const Eigen::VectorXd& g, const Eigen::VectorXd& u, double sigma2,
                             std::uint64_t seed);

/// One draw g ~ N(0, K) as F z, with F F^T = K the closed-form upper factor
/// and z standard normal from Rng(seed).
Eigen::VectorXd sample_dc_prior(const DcHyperparams& hyper, Index n, std::uint64_t seed);

struct LeastSquaresEstimate {
  Eigen::VectorXd g;
  /// Residual sum of squares over N - n.
  double sigma2 = 0.0;
};

/// Ordinary least squares; throws RankDeficiencyError if Phi^T is rank
/// deficient and DomainError if N <= n.
LeastSquaresEstimate ls_estimate(const RegressionData& data);

}  // namespace dcsysid
