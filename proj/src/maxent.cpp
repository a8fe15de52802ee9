#include "dcsysid/maxent.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <string>

#include "dcsysid/parallel.hpp"

namespace dcsysid {

namespace {

constexpr double kPivotFloor = 1e-12;

// Cholesky with a pivot floor relative to the largest diagonal entry.
bool is_positive_definite(const Eigen::MatrixXd& a) {
  const Index size = a.rows();
  if (size == 0) return true;
  const double floor = kPivotFloor * a.diagonal().maxCoeff();
  if (!(floor > 0.0)) return false;
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(size, size);
  for (Index j = 0; j < size; ++j) {
    double pivot = a(j, j) - l.row(j).head(j).squaredNorm();
    if (!(pivot > floor)) return false;
    l(j, j) = std::sqrt(pivot);
    for (Index i = j + 1; i < size; ++i)
      l(i, j) = (a(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
  }
  return true;
}

// One-step central extension of the principal block [first, last] of c,
// whose only unknown entry is the corner (first, last).
double corner_value(const Eigen::MatrixXd& c, Index first, Index last) {
  const Index inner = last - first;  // order of the leading block
  Eigen::LLT<Eigen::MatrixXd> llt(c.block(first, first, inner, inner));
  if (llt.info() != Eigen::Success)
    throw FeasibilityError(static_cast<std::size_t>(first),
                           "leading block of one-step extension is not positive definite");
  const Eigen::VectorXd y = llt.solve(Eigen::VectorXd::Unit(inner, 0));
  double acc = 0.0;
  for (Index k = 1; k < inner; ++k) acc += c(last, first + k) * y(k);
  return -acc / y(0);
}

Eigen::MatrixXd seed_band(const PartialBandMatrix& p) {
  const Index n = p.n();
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, n);
  for (Index d = 0; d <= p.m(); ++d) {
    const Eigen::VectorXd& diag = p.diagonal(d);
    for (Index k = 0; k + d < n; ++k) {
      c(k, k + d) = diag(k);
      c(k + d, k) = diag(k);
    }
  }
  return c;
}

void require_feasible(const PartialBandMatrix& p) {
  const FeasibilityReport report = check_feasibility(p);
  if (!report.feasible) {
    const Index block = *report.failing_block;
    throw FeasibilityError(static_cast<std::size_t>(block),
                           "band admits no positive definite completion: block " +
                               std::to_string(block) + " (rows " + std::to_string(block) +
                               ".." + std::to_string(block + p.m()) +
                               ") is not positive definite");
  }
}

// Banded factor of the inverse: C^{-1} = L diag(v) L^T.
void assemble_factors(const PartialBandMatrix& p, CentralExtension& out) {
  const Index n = p.n();
  const Index m = p.m();
  out.l_factor = Eigen::MatrixXd::Identity(n, n);
  out.v_diag.resize(n);
  for (Index j = 0; j < n; ++j) {
    const Index beta = std::min(j + m, n - 1);
    if (j + 1 <= beta) {
      const Index alpha = j + 1;
      const Index len = beta - alpha + 1;
      Eigen::VectorXd rhs(len);
      for (Index k = 0; k < len; ++k) rhs(k) = p.at(alpha + k, j);
      Eigen::LLT<Eigen::MatrixXd> llt(p.block(alpha, len));
      if (llt.info() != Eigen::Success)
        throw FeasibilityError(static_cast<std::size_t>(alpha), "band block is not positive definite");
      out.l_factor.col(j).segment(alpha, len) = -llt.solve(rhs);
    }
    const Index len = beta - j + 1;
    Eigen::LLT<Eigen::MatrixXd> llt(p.block(j, len));
    if (llt.info() != Eigen::Success)
      throw FeasibilityError(static_cast<std::size_t>(j), "band block is not positive definite");
    out.v_diag(j) = llt.solve(Eigen::VectorXd::Unit(len, 0))(0);
  }
}

CentralExtension finish(const PartialBandMatrix& p, Eigen::MatrixXd completed) {
  CentralExtension out;
  out.completed = std::move(completed);
  assemble_factors(p, out);
  out.entropy = gaussian_entropy(out.completed);
  return out;
}

}  // namespace

PartialBandMatrix::PartialBandMatrix(Index n, Index m, std::vector<Eigen::VectorXd> diagonals)
    : n_(n), m_(m), diagonals_(std::move(diagonals)) {
  if (n < 1) throw DomainError("band matrix order must be >= 1");
  if (m < 0 || m > n - 1)
    throw DomainError("bandwidth must satisfy 0 <= m <= n - 1, got m=" + std::to_string(m) +
                      " for n=" + std::to_string(n));
  if (static_cast<Index>(diagonals_.size()) != m + 1)
    throw DomainError("expected " + std::to_string(m + 1) + " diagonals, got " +
                      std::to_string(diagonals_.size()));
  for (Index d = 0; d <= m; ++d) {
    if (diagonals_[static_cast<std::size_t>(d)].size() != n - d)
      throw DomainError("diagonal " + std::to_string(d) + " must have " + std::to_string(n - d) +
                        " entries");
  }
}

PartialBandMatrix PartialBandMatrix::from_dense(const Eigen::MatrixXd& full, Index m) {
  const Index n = full.rows();
  std::vector<Eigen::VectorXd> diags;
  for (Index d = 0; d <= m; ++d) diags.emplace_back(full.diagonal(d));
  return PartialBandMatrix(n, m, std::move(diags));
}

bool PartialBandMatrix::specified(Index i, Index j) const noexcept {
  return i >= 0 && j >= 0 && i < n_ && j < n_ && std::abs(i - j) <= m_;
}

double PartialBandMatrix::at(Index i, Index j) const {
  if (!specified(i, j))
    throw DomainError("entry (" + std::to_string(i) + ", " + std::to_string(j) +
                      ") is outside the specified band");
  const Index d = std::abs(i - j);
  return diagonals_[static_cast<std::size_t>(d)](std::min(i, j));
}

const Eigen::VectorXd& PartialBandMatrix::diagonal(Index offset) const {
  if (offset < 0 || offset > m_) throw DomainError("diagonal offset outside band");
  return diagonals_[static_cast<std::size_t>(offset)];
}

Eigen::MatrixXd PartialBandMatrix::block(Index first, Index size) const {
  Eigen::MatrixXd b(size, size);
  for (Index j = 0; j < size; ++j)
    for (Index i = 0; i < size; ++i) b(i, j) = at(first + i, first + j);
  return b;
}

FeasibilityReport check_feasibility(const PartialBandMatrix& p) {
  const Index width = p.m() + 1;
  for (Index i = 0; i + width <= p.n(); ++i) {
    if (!is_positive_definite(p.block(i, width))) return {false, i};
  }
  return {};
}

double one_step_extension(const PartialBandMatrix& p) {
  const Index n = p.n();
  if (n < 2 || p.m() != n - 2)
    throw DomainError("one-step extension needs an (n-2)-band matrix with n >= 2");
  require_feasible(p);
  return corner_value(seed_band(p), 0, n - 1);
}

CentralExtension central_extension(const PartialBandMatrix& p) {
  require_feasible(p);
  const Index n = p.n();
  Eigen::MatrixXd c = seed_band(p);
  // Entries on one off-diagonal only read entries closer to the main
  // diagonal, so each diagonal is an independent parallel batch.
  for (Index d = p.m() + 1; d < n; ++d) {
    std::atomic<bool> failed{false};
    const Index count = n - d;
#pragma omp parallel for num_threads(parallel::thread_count()) if (count >= 8) schedule(dynamic)
    for (Index i = 0; i < count; ++i) {
      try {
        const double x = corner_value(c, i, i + d);
        c(i, i + d) = x;
        c(i + d, i) = x;
      } catch (const Error&) {
        failed.store(true);
      }
    }
    if (failed.load()) throw FeasibilityError(0, "central extension broke down numerically");
  }
  return finish(p, std::move(c));
}

double gaussian_entropy(const Eigen::MatrixXd& k) {
  if (k.rows() != k.cols() || k.rows() == 0) throw DomainError("entropy needs a square matrix");
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) throw DomainError("entropy needs a positive definite matrix");
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const auto n = static_cast<double>(k.rows());
  return 0.5 * logdet + 0.5 * n * (1.0 + std::log(2.0 * std::numbers::pi));
}

namespace reference {

CentralExtension central_extension_serial(const PartialBandMatrix& p) {
  require_feasible(p);
  const Index n = p.n();
  Eigen::MatrixXd c = seed_band(p);
  for (Index d = p.m() + 1; d < n; ++d) {
    for (Index i = 0; i + d < n; ++i) {
      const double x = corner_value(c, i, i + d);
      c(i, i + d) = x;
      c(i + d, i) = x;
    }
  }
  return finish(p, std::move(c));
}

Eigen::MatrixXd central_extension_columnwise(const PartialBandMatrix& p) {
  require_feasible(p);
  const Index n = p.n();
  const Index m = p.m();
  Eigen::MatrixXd c = seed_band(p);
  for (Index t = m + 1; t < n; ++t) {
    for (Index s = t - m - 1; s >= 0; --s) {
      const double x = corner_value(c, s, t);
      c(s, t) = x;
      c(t, s) = x;
    }
  }
  return c;
}

}  // namespace reference

}  // namespace dcsysid
