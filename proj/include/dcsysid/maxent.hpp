#pragma once

// Maximum-entropy (central) completion of partially specified band matrices.
//
// A PartialBandMatrix of order n and bandwidth m fixes the entries with
// |i - j| <= m and leaves the rest free. Among all positive definite
// completions, the central one maximizes log det; it is unique, and its
// inverse vanishes outside the band. It is computed here by nested one-step
// extensions, filling one off-diagonal at a time, and alongside it the
// banded factorization C^{-1} = L diag(v) L^T.
//
// Indices are 0-based.

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "dcsysid/errors.hpp"

namespace dcsysid {

using Index = Eigen::Index;

class PartialBandMatrix {
 public:
  /// diagonals[d] holds the n - d entries (k, k + d), k = 0..n-d-1, for
  /// d = 0..m. Throws DomainError on inconsistent lengths.
  PartialBandMatrix(Index n, Index m, std::vector<Eigen::VectorXd> diagonals);

  /// Band of a dense symmetric matrix.
  static PartialBandMatrix from_dense(const Eigen::MatrixXd& full, Index m);

  Index n() const noexcept { return n_; }
  Index m() const noexcept { return m_; }

  /// Specified entry; throws DomainError if |i - j| > m. Unspecified is not
  /// the same as zero.
  double at(Index i, Index j) const;
  bool specified(Index i, Index j) const noexcept;

  const Eigen::VectorXd& diagonal(Index offset) const;

  /// Fully specified principal block rows/cols [first, first + size).
  /// Every pair inside must lie in the band.
  Eigen::MatrixXd block(Index first, Index size) const;

 private:
  Index n_;
  Index m_;
  std::vector<Eigen::VectorXd> diagonals_;
};

struct FeasibilityReport {
  bool feasible = true;
  /// First (m+1)x(m+1) principal block that is not positive definite.
  std::optional<Index> failing_block;
};

struct CentralExtension {
  Eigen::MatrixXd completed;
  /// Unit lower triangular, bandwidth m.
  Eigen::MatrixXd l_factor;
  Eigen::VectorXd v_diag;
  double entropy = 0.0;
};

/// Positive definiteness test for the n - m contiguous (m+1)x(m+1) blocks.
/// A block passes iff its Cholesky pivots all exceed 1e-12 times the
/// block's largest diagonal entry.
FeasibilityReport check_feasibility(const PartialBandMatrix& p);

/// Optimal corner value x = C(0, n-1) of an (n-2)-band matrix.
double one_step_extension(const PartialBandMatrix& p);

CentralExtension central_extension(const PartialBandMatrix& p);

/// Differential entropy of N(0, k): log det(k) / 2 + n (1 + log 2 pi) / 2.
double gaussian_entropy(const Eigen::MatrixXd& k);

namespace reference {

/// Single-threaded completion, one entry at a time in offset-major order.
CentralExtension central_extension_serial(const PartialBandMatrix& p);

/// Same recursion traversed column by column (t = m+2..n, s = t-m-1..1 in
/// 1-based terms). Order independence is a test, not an assumption.
Eigen::MatrixXd central_extension_columnwise(const PartialBandMatrix& p);

}  // namespace reference

}  // namespace dcsysid
