#pragma once

// Diagonal/Correlated (DC) kernels and their closed-form algebra.
//
// Index convention: every formula here is written for 1-based indices
// i, j = 1..n, so that entry (i, j) of the DC kernel is
//
//     c * lambda^((i + j) / 2) * rho^|i - j|.
//
// The C++ interface is 0-based throughout: Eigen element (r, s) holds the
// value for i = r + 1, j = s + 1. The shift happens once, inside the
// builders, and nowhere else.

#include <array>
#include <optional>

#include <Eigen/Dense>

#include "dcsysid/errors.hpp"

namespace dcsysid {

using Index = Eigen::Index;

/// Hyperparameters (c, lambda, rho) of a DC kernel.
struct DcHyperparams {
  double c = 1.0;
  double lambda = 0.9;
  double rho = 0.8;

  /// Throws DomainError unless c >= 0, 0 <= lambda < 1, -1 <= rho <= 1.
  void validate() const;
  /// Throws SingularityError unless c > 0, 0 < lambda < 1, |rho| < 1.
  void validate_strict() const;

  /// The TC kernel is the DC kernel at rho = sqrt(lambda).
  static DcHyperparams tc(double c, double lambda);

  friend bool operator==(const DcHyperparams&, const DcHyperparams&) = default;
};

/// Dense symmetric kernel matrix. Immutable once built.
class KernelMatrix {
 public:
  explicit KernelMatrix(Eigen::MatrixXd entries,
                        std::optional<DcHyperparams> source = std::nullopt);

  Index n() const noexcept { return entries_.rows(); }
  const Eigen::MatrixXd& entries() const noexcept { return entries_; }
  double operator()(Index i, Index j) const { return entries_(i, j); }
  /// Hyperparameters the matrix was generated from, if it is a DC kernel.
  const std::optional<DcHyperparams>& source() const noexcept { return source_; }

 private:
  Eigen::MatrixXd entries_;
  std::optional<DcHyperparams> source_;
};

/// Symmetric tridiagonal matrix; entries with |i - j| > 1 are zero.
struct TridiagonalMatrix {
  Eigen::VectorXd main;  // n entries
  Eigen::VectorXd sub;   // n - 1 entries; super diagonal is identical

  Index n() const noexcept { return main.size(); }
  double operator()(Index i, Index j) const;
  Eigen::MatrixXd dense() const;
  /// y = T x in O(n).
  Eigen::VectorXd multiply(const Eigen::VectorXd& x) const;
  /// T * B for a dense B in O(n * cols).
  Eigen::MatrixXd multiply(const Eigen::MatrixXd& b) const;
};

/// Lower bidiagonal matrix: diag on (i, i), sub on (i + 1, i).
struct LowerBidiagonal {
  Eigen::VectorXd diag;
  Eigen::VectorXd sub;

  Index n() const noexcept { return diag.size(); }
  Eigen::MatrixXd dense() const;
};

/// All closed-form factors of a DC kernel K and its inverse.
///
///   K      = U diag(w) U^T       (U upper triangular Toeplitz, unit diagonal)
///   K^{-1} = L diag(v) L^T       (L lower bidiagonal Toeplitz, unit diagonal)
///   K^{-1} = D D^T               (D lower bidiagonal)
struct FactoredKernel {
  Eigen::MatrixXd u_factor;
  Eigen::VectorXd w_diag;
  LowerBidiagonal l_factor;
  Eigen::VectorXd v_diag;
  LowerBidiagonal d_cholesky;
  double logdet = 0.0;
};

/// Partial derivatives of K with respect to (c, lambda, rho).
using KernelGradient = std::array<Eigen::MatrixXd, 3>;

/// Second partials of K, indexed [a][b] for a, b in {c, lambda, rho}.
using KernelHessian = std::array<std::array<Eigen::MatrixXd, 3>, 3>;

KernelMatrix build_dc_kernel(const DcHyperparams& hyper, Index n);
KernelMatrix build_tc_kernel(double c, double lambda, Index n);

FactoredKernel dc_factorize(const DcHyperparams& hyper, Index n);

/// Closed-form tridiagonal inverse of the DC kernel.
TridiagonalMatrix dc_inverse(const DcHyperparams& hyper, Index n);

/// Bidiagonal Cholesky factor D of K^{-1} (K^{-1} = D D^T).
LowerBidiagonal dc_inverse_cholesky(const DcHyperparams& hyper, Index n);

/// Upper triangular factor U diag(w)^{1/2} with K = F F^T.
Eigen::MatrixXd dc_cholesky_upper(const DcHyperparams& hyper, Index n);

/// log det K = n log c + n(n+1)/2 log lambda + (n-1) log(1 - rho^2).
double dc_logdet(const DcHyperparams& hyper, Index n);

/// 2-norm condition number ||K||_2 * ||K^{-1}||_2 from the closed forms.
double dc_condition_number(const DcHyperparams& hyper, Index n);

KernelGradient dc_kernel_gradient(const DcHyperparams& hyper, Index n);
KernelHessian dc_kernel_hessian(const DcHyperparams& hyper, Index n);

namespace reference {

/// Single-threaded DC kernel construction, kept as the test oracle for the
/// OpenMP builder.
Eigen::MatrixXd build_dc_kernel_serial(const DcHyperparams& hyper, Index n);

}  // namespace reference

}  // namespace dcsysid
