#pragma once

// Marginal-likelihood objective for FIR regression with a DC prior:
//
//   l(eta) = log det(Phi^T K Phi + s2 I_N) + Y^T (Phi^T K Phi + s2 I_N)^{-1} Y
//
// evaluated four ways:
//   nll_naive        dense N x N Cholesky; O(N^3) oracle
//   nll_algorithm_a  numerical Cholesky K = L L^T, then QR of [R_d1 L, R_d2; s I, 0]
//   nll_algorithm_b  as A with the closed-form factor L = U W^{1/2}
//   nll_algorithm_c  closed-form bidiagonal D (K^{-1} = D D^T), QR of
//                    [R_d1 R_d2; s D^T 0]
// All three fast routes start from the compressed data [R_d1 R_d2] of a
// single thin QR of [Phi^T Y], computed once per data set.

#include <array>
#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dcsysid/kernel.hpp"
#include "dcsysid/regression.hpp"

namespace dcsysid {

struct PreprocessedData {
  Eigen::MatrixXd r_d1;  // (n+1) x n, upper triangular
  Eigen::VectorXd r_d2;  // n+1
  double y_norm2 = 0.0;
  Index n = 0;
  Index samples = 0;
};

/// Thin QR of [Phi^T Y] with a positive diagonal. Throws
/// RankDeficiencyError naming the first dependent column of Phi^T. A Y that
/// lies in the range of Phi^T is allowed and leaves r_d2(n) = 0.
PreprocessedData preprocess(const RegressionData& data);
PreprocessedData preprocess(const Eigen::MatrixXd& phi_t, const Eigen::VectorXd& y);

/// Analytic flop counts, one entry per algorithm stage.
struct FlopTally {
  std::vector<std::pair<std::string, double>> stages;
  double total() const;
};

namespace flops {

double preprocessing(Index n, Index samples);
double stacked_qr(Index n);
FlopTally algorithm_a(Index n);
FlopTally algorithm_b(Index n);
FlopTally algorithm_c(Index n);

}  // namespace flops

struct ObjectiveEvaluation {
  double value = 0.0;
  Eigen::MatrixXd r1;  // n x n upper triangular, positive diagonal
  Eigen::VectorXd r2;
  double r_scalar = 0.0;
  std::optional<Eigen::Vector3d> gradient;
  std::optional<Eigen::Matrix3d> hessian;
  FlopTally flops;
  std::chrono::nanoseconds wall_time{0};
};

/// Direct dense evaluation; allows c = 0.
double nll_naive(const DcHyperparams& hyper, double sigma2, const RegressionData& data);

ObjectiveEvaluation nll_algorithm_a(const DcHyperparams& hyper, double sigma2,
                                    const PreprocessedData& pre);
ObjectiveEvaluation nll_algorithm_b(const DcHyperparams& hyper, double sigma2,
                                    const PreprocessedData& pre);
ObjectiveEvaluation nll_algorithm_c(const DcHyperparams& hyper, double sigma2,
                                    const PreprocessedData& pre);

/// Posterior mean R_1^{-1} R_2 from the Algorithm C factorization.
Eigen::VectorXd map_estimate(const DcHyperparams& hyper, double sigma2, const PreprocessedData& pre);
Eigen::VectorXd map_estimate(const ObjectiveEvaluation& eval);

struct GradientHessian {
  double value = 0.0;
  Eigen::Vector3d gradient;  // d l / d (c, lambda, rho)
  Eigen::Matrix3d hessian;   // zero when not requested
};

/// Analytic derivatives through X1 = K^{-1} - s2 K^{-1} (R1^T R1)^{-1} K^{-1}
/// and X2 = K^{-1} g g^T K^{-1}, using the closed tridiagonal K^{-1}.
GradientHessian nll_gradient_hessian(const DcHyperparams& hyper, double sigma2,
                                     const PreprocessedData& pre, bool with_hessian = true);

/// d l / d sigma2 at fixed kernel, from the same factorization.
double nll_sigma2_derivative(const DcHyperparams& hyper, double sigma2, const PreprocessedData& pre);

/// Algorithm C at many hyperparameter points; OpenMP over the points.
std::vector<double> evaluate_batch(const std::vector<DcHyperparams>& points, double sigma2,
                                   const PreprocessedData& pre);

namespace reference {

/// Algorithm C with a dense Householder QR of the full stack instead of the
/// structured one.
ObjectiveEvaluation nll_algorithm_c_dense(const DcHyperparams& hyper, double sigma2,
                                          const PreprocessedData& pre);

std::vector<double> evaluate_batch_serial(const std::vector<DcHyperparams>& points, double sigma2,
                                          const PreprocessedData& pre);

}  // namespace reference

}  // namespace dcsysid
