#include "dcsysid/kernel.hpp"

#include <cmath>
#include <sstream>
#include <vector>

#include "dcsysid/parallel.hpp"

namespace dcsysid {

namespace {

// Below this order the OpenMP region costs more than it saves.
constexpr Index kParallelMinOrder = 96;

// Dense eigensolve up to this order, power iteration beyond.
constexpr Index kDenseEigenMaxOrder = 256;

std::string describe(const DcHyperparams& h) {
  std::ostringstream os;
  os.precision(17);
  os << "(c=" << h.c << ", lambda=" << h.lambda << ", rho=" << h.rho << ")";
  return os.str();
}

void require_order(Index n) {
  if (n < 1) throw DomainError("kernel order must be >= 1, got " + std::to_string(n));
}

// half_pow[k] = lambda^(k/2) for k = 0..2n; rho_pow[d] = rho^d for d = 0..n-1.
struct PowerTables {
  std::vector<double> half_pow;
  std::vector<double> rho_pow;

  PowerTables(double lambda, double rho, Index n)
      : half_pow(static_cast<std::size_t>(2 * n + 1)),
        rho_pow(static_cast<std::size_t>(n)) {
    for (std::size_t k = 0; k < half_pow.size(); ++k)
      half_pow[k] = std::pow(lambda, 0.5 * static_cast<double>(k));
    for (std::size_t d = 0; d < rho_pow.size(); ++d)
      rho_pow[d] = std::pow(rho, static_cast<double>(d));
  }

  // Unit-scale entry for 0-based (r, s), i.e. 1-based (r + 1, s + 1).
  double unit(Index r, Index s) const {
    const auto d = static_cast<std::size_t>(r > s ? r - s : s - r);
    return half_pow[static_cast<std::size_t>(r + s + 2)] * rho_pow[d];
  }
};

}  // namespace

void DcHyperparams::validate() const {
  if (!(c >= 0.0) || !std::isfinite(c))
    throw DomainError("DC hyperparameter c must be finite and >= 0: " + describe(*this));
  if (!(lambda >= 0.0 && lambda < 1.0))
    throw DomainError("DC hyperparameter lambda must lie in [0, 1): " + describe(*this));
  if (!(rho >= -1.0 && rho <= 1.0))
    throw DomainError("DC hyperparameter rho must lie in [-1, 1]: " + describe(*this));
}

void DcHyperparams::validate_strict() const {
  validate();
  if (c == 0.0)
    throw SingularityError("c", "kernel is singular at c = 0: " + describe(*this));
  if (lambda == 0.0)
    throw SingularityError("lambda", "kernel is singular at lambda = 0: " + describe(*this));
  if (std::abs(rho) == 1.0)
    throw SingularityError("rho", "kernel is singular at |rho| = 1: " + describe(*this));
}

DcHyperparams DcHyperparams::tc(double c, double lambda) {
  if (!(lambda >= 0.0 && lambda < 1.0))
    throw DomainError("TC hyperparameter lambda must lie in [0, 1)");
  return DcHyperparams{c, lambda, std::sqrt(lambda)};
}

KernelMatrix::KernelMatrix(Eigen::MatrixXd entries, std::optional<DcHyperparams> source)
    : entries_(std::move(entries)), source_(source) {
  if (entries_.rows() != entries_.cols())
    throw DomainError("kernel matrix must be square");
}

double TridiagonalMatrix::operator()(Index i, Index j) const {
  if (i == j) return main(i);
  if (i == j + 1) return sub(j);
  if (j == i + 1) return sub(i);
  return 0.0;
}

Eigen::MatrixXd TridiagonalMatrix::dense() const {
  const Index size = n();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(size, size);
  out.diagonal() = main;
  for (Index k = 0; k + 1 < size; ++k) {
    out(k + 1, k) = sub(k);
    out(k, k + 1) = sub(k);
  }
  return out;
}

Eigen::VectorXd TridiagonalMatrix::multiply(const Eigen::VectorXd& x) const {
  const Index size = n();
  Eigen::VectorXd y = main.cwiseProduct(x);
  for (Index k = 0; k + 1 < size; ++k) {
    y(k) += sub(k) * x(k + 1);
    y(k + 1) += sub(k) * x(k);
  }
  return y;
}

Eigen::MatrixXd TridiagonalMatrix::multiply(const Eigen::MatrixXd& b) const {
  const Index size = n();
  Eigen::MatrixXd y = main.asDiagonal() * b;
  for (Index k = 0; k + 1 < size; ++k) {
    y.row(k) += sub(k) * b.row(k + 1);
    y.row(k + 1) += sub(k) * b.row(k);
  }
  return y;
}

Eigen::MatrixXd LowerBidiagonal::dense() const {
  const Index size = n();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(size, size);
  out.diagonal() = diag;
  for (Index k = 0; k + 1 < size; ++k) out(k + 1, k) = sub(k);
  return out;
}

namespace reference {

Eigen::MatrixXd build_dc_kernel_serial(const DcHyperparams& hyper, Index n) {
  require_order(n);
  hyper.validate();
  const PowerTables tables(hyper.lambda, hyper.rho, n);
  Eigen::MatrixXd k(n, n);
  for (Index s = 0; s < n; ++s)
    for (Index r = 0; r < n; ++r) k(r, s) = hyper.c * tables.unit(r, s);
  return k;
}

}  // namespace reference

KernelMatrix build_dc_kernel(const DcHyperparams& hyper, Index n) {
  require_order(n);
  hyper.validate();
  const PowerTables tables(hyper.lambda, hyper.rho, n);
  Eigen::MatrixXd k(n, n);
  const double c = hyper.c;
#pragma omp parallel for num_threads(parallel::thread_count()) if (n >= kParallelMinOrder) schedule(static)
  for (Index s = 0; s < n; ++s)
    for (Index r = 0; r < n; ++r) k(r, s) = c * tables.unit(r, s);
  return KernelMatrix(std::move(k), hyper);
}

KernelMatrix build_tc_kernel(double c, double lambda, Index n) {
  return build_dc_kernel(DcHyperparams::tc(c, lambda), n);
}

double dc_logdet(const DcHyperparams& hyper, Index n) {
  require_order(n);
  hyper.validate_strict();
  const auto nn = static_cast<double>(n);
  return nn * std::log(hyper.c) + 0.5 * nn * (nn + 1.0) * std::log(hyper.lambda) +
         (nn - 1.0) * std::log1p(-hyper.rho * hyper.rho);
}

LowerBidiagonal dc_inverse_cholesky(const DcHyperparams& hyper, Index n) {
  require_order(n);
  hyper.validate_strict();
  const double one_minus_rho2 = 1.0 - hyper.rho * hyper.rho;
  const double ratio = hyper.rho / std::sqrt(hyper.lambda);
  const double scale = 1.0 / std::sqrt(hyper.c * one_minus_rho2);
  LowerBidiagonal d{Eigen::VectorXd(n), Eigen::VectorXd(n - 1)};
  // D = L diag(v)^{1/2}: column k (1-based) carries sqrt(v_k).
  for (Index k = 0; k + 1 < n; ++k) {
    const double root_v = scale * std::pow(hyper.lambda, -0.5 * static_cast<double>(k + 1));
    d.diag(k) = root_v;
    d.sub(k) = -ratio * root_v;
  }
  d.diag(n - 1) = std::pow(hyper.lambda, -0.5 * static_cast<double>(n)) / std::sqrt(hyper.c);
  return d;
}

Eigen::MatrixXd dc_cholesky_upper(const DcHyperparams& hyper, Index n) {
  require_order(n);
  hyper.validate_strict();
  const double lambda = hyper.lambda;
  const double one_minus_rho2 = 1.0 - hyper.rho * hyper.rho;
  // Column s of U diag(w)^{1/2} is sqrt(w_s) * (rho / sqrt(lambda))^(s - r).
  std::vector<double> ratio_pow(static_cast<std::size_t>(n));
  for (Index d = 0; d < n; ++d)
    ratio_pow[static_cast<std::size_t>(d)] = std::pow(hyper.rho, static_cast<double>(d)) *
                                             std::pow(lambda, -0.5 * static_cast<double>(d));
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(n, n);
  for (Index s = 0; s < n; ++s) {
    const double w = s + 1 < n ? hyper.c * one_minus_rho2 * std::pow(lambda, static_cast<double>(s + 1))
                               : hyper.c * std::pow(lambda, static_cast<double>(n));
    const double root_w = std::sqrt(w);
    for (Index r = 0; r <= s; ++r) f(r, s) = root_w * ratio_pow[static_cast<std::size_t>(s - r)];
  }
  return f;
}

FactoredKernel dc_factorize(const DcHyperparams& hyper, Index n) {
  require_order(n);
  hyper.validate_strict();
  const double lambda = hyper.lambda;
  const double rho = hyper.rho;
  const double one_minus_rho2 = 1.0 - rho * rho;

  FactoredKernel f;
  f.u_factor = Eigen::MatrixXd::Identity(n, n);
  for (Index d = 1; d < n; ++d) {
    const double entry = std::pow(rho, static_cast<double>(d)) *
                         std::pow(lambda, -0.5 * static_cast<double>(d));
    for (Index r = 0; r + d < n; ++r) f.u_factor(r, r + d) = entry;
  }

  f.w_diag.resize(n);
  f.v_diag.resize(n);
  for (Index k = 0; k + 1 < n; ++k) {
    const double lam_k = std::pow(lambda, static_cast<double>(k + 1));
    f.w_diag(k) = hyper.c * one_minus_rho2 * lam_k;
    f.v_diag(k) = 1.0 / (hyper.c * one_minus_rho2 * lam_k);
  }
  const double lam_n = std::pow(lambda, static_cast<double>(n));
  f.w_diag(n - 1) = hyper.c * lam_n;
  f.v_diag(n - 1) = 1.0 / (hyper.c * lam_n);

  f.l_factor.diag = Eigen::VectorXd::Ones(n);
  f.l_factor.sub = Eigen::VectorXd::Constant(n - 1, -rho / std::sqrt(lambda));
  f.d_cholesky = dc_inverse_cholesky(hyper, n);
  f.logdet = dc_logdet(hyper, n);
  return f;
}

TridiagonalMatrix dc_inverse(const DcHyperparams& hyper, Index n) {
  require_order(n);
  hyper.validate_strict();
  const double lambda = hyper.lambda;
  const double rho = hyper.rho;
  const double inv_c = 1.0 / hyper.c;
  TridiagonalMatrix t{Eigen::VectorXd(n), Eigen::VectorXd(n - 1)};
  if (n == 1) {
    t.main(0) = inv_c / lambda;
    return t;
  }
  const double denom = 1.0 - rho * rho;
  for (Index r = 0; r < n; ++r) {
    const bool interior = r > 0 && r + 1 < n;
    const double cij = interior ? 1.0 + rho * rho : 1.0;
    t.main(r) = inv_c * cij / denom * std::pow(lambda, -static_cast<double>(r + 1));
  }
  // (i, i+1) in 1-based terms: sign (-1)^(2i+1) = -1, lambda^{-(2i+1)/2}.
  for (Index r = 0; r + 1 < n; ++r)
    t.sub(r) = -inv_c * rho / denom * std::pow(lambda, -0.5 * static_cast<double>(2 * r + 3));
  return t;
}

namespace {

double largest_eigenvalue_dense(const Eigen::MatrixXd& k) {
  if (k.rows() <= kDenseEigenMaxOrder) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericalError("eigensolver failed on kernel");
    return es.eigenvalues().maxCoeff();
  }
  // Power iteration; K is positive definite so the Rayleigh quotient
  // increases monotonically to the top eigenvalue.
  Eigen::VectorXd x = Eigen::VectorXd::Ones(k.rows()).normalized();
  double estimate = 0.0;
  for (int it = 0; it < 20000; ++it) {
    Eigen::VectorXd y = k * x;
    const double next = x.dot(y);
    x = y.normalized();
    if (std::abs(next - estimate) <= 1e-14 * std::abs(next)) return next;
    estimate = next;
  }
  return estimate;
}

}  // namespace

double dc_condition_number(const DcHyperparams& hyper, Index n) {
  hyper.validate_strict();
  const KernelMatrix k = build_dc_kernel(hyper, n);
  const TridiagonalMatrix inv = dc_inverse(hyper, n);
  const double norm_k = largest_eigenvalue_dense(k.entries());
  double norm_inv = inv.main(0);
  if (n > 1) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(inv.main, inv.sub, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericalError("tridiagonal eigensolver failed");
    norm_inv = es.eigenvalues().maxCoeff();
  }
  return norm_k * norm_inv;
}

KernelGradient dc_kernel_gradient(const DcHyperparams& hyper, Index n) {
  require_order(n);
  hyper.validate_strict();
  const double c = hyper.c;
  const double lambda = hyper.lambda;
  const double rho = hyper.rho;
  KernelGradient g{Eigen::MatrixXd(n, n), Eigen::MatrixXd(n, n), Eigen::MatrixXd(n, n)};
  for (Index s = 0; s < n; ++s) {
    for (Index r = 0; r < n; ++r) {
      const double half_sum = 0.5 * static_cast<double>(r + s + 2);
      const auto d = static_cast<double>(r > s ? r - s : s - r);
      const double lam_pow = std::pow(lambda, half_sum);
      const double rho_pow = std::pow(rho, d);
      g[0](r, s) = lam_pow * rho_pow;
      g[1](r, s) = c * half_sum * std::pow(lambda, half_sum - 1.0) * rho_pow;
      g[2](r, s) = d == 0.0 ? 0.0 : c * lam_pow * d * std::pow(rho, d - 1.0);
    }
  }
  return g;
}

KernelHessian dc_kernel_hessian(const DcHyperparams& hyper, Index n) {
  require_order(n);
  hyper.validate_strict();
  const double c = hyper.c;
  const double lambda = hyper.lambda;
  const double rho = hyper.rho;
  KernelHessian h;
  for (auto& row : h)
    for (auto& m : row) m = Eigen::MatrixXd::Zero(n, n);
  for (Index s = 0; s < n; ++s) {
    for (Index r = 0; r < n; ++r) {
      const double a = 0.5 * static_cast<double>(r + s + 2);
      const auto d = static_cast<double>(r > s ? r - s : s - r);
      const double lam_a = std::pow(lambda, a);
      const double lam_a1 = a * std::pow(lambda, a - 1.0);
      const double lam_a2 = a * (a - 1.0) * std::pow(lambda, a - 2.0);
      const double rho_d = std::pow(rho, d);
      const double rho_d1 = d == 0.0 ? 0.0 : d * std::pow(rho, d - 1.0);
      const double rho_d2 = d < 2.0 ? 0.0 : d * (d - 1.0) * std::pow(rho, d - 2.0);
      h[0][1](r, s) = lam_a1 * rho_d;
      h[0][2](r, s) = lam_a * rho_d1;
      h[1][1](r, s) = c * lam_a2 * rho_d;
      h[1][2](r, s) = c * lam_a1 * rho_d1;
      h[2][2](r, s) = c * lam_a * rho_d2;
    }
  }
  h[1][0] = h[0][1];
  h[2][0] = h[0][2];
  h[2][1] = h[1][2];
  return h;
}

}  // namespace dcsysid
