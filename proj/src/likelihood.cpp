#include "dcsysid/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dcsysid/parallel.hpp"

namespace dcsysid {

namespace {

using Clock = std::chrono::steady_clock;

void require_sigma2(double sigma2) {
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
    throw DomainError("noise variance must be finite and > 0, got " + std::to_string(sigma2));
}

// Upper triangular factor of a thin Householder QR, rows flipped so the
// diagonal is non-negative. Factors `a` in place.
Eigen::MatrixXd positive_r(Eigen::MatrixXd& a) {
  const Index cols = a.cols();
  Eigen::HouseholderQR<Eigen::Ref<Eigen::MatrixXd>> qr(a);
  Eigen::MatrixXd r = a.topRows(cols).triangularView<Eigen::Upper>();
  for (Index k = 0; k < cols; ++k)
    if (r(k, k) < 0.0) r.row(k) *= -1.0;
  return r;
}

// Splits the (n+1) x (n+1) factor of a stacked QR into R1, R2, r.
void split_factor(const Eigen::MatrixXd& r, ObjectiveEvaluation& out) {
  const Index n = r.cols() - 1;
  out.r1 = r.topLeftCorner(n, n);
  out.r2 = r.col(n).head(n);
  out.r_scalar = r(n, n);
}

// R factor of [top; bottom] where top is (n+1) x (n+1) upper triangular and
// bottom is n x (n+1) upper bidiagonal. Householder reflections only touch
// the nonzero rows: at column j those are top row j and bottom rows 0..j,
// since bottom row k fills in to the right of column k once column k has
// been eliminated. Cost is about 2n^3/3 flops against 10n^3/3 for a dense
// QR of the same stack. The diagonal comes out non-negative.
Eigen::MatrixXd triangular_over_banded_r(Eigen::MatrixXd top, Eigen::MatrixXd bottom) {
  const Index cols = top.cols();
  const Index rows_below = bottom.rows();
  Eigen::VectorXd v;
  Eigen::RowVectorXd w;
  for (Index j = 0; j < cols; ++j) {
    const Index h = std::min(j + 1, rows_below);
    const Index trailing = cols - j - 1;
    if (h == 0) continue;
    const double x0 = top(j, j);
    const double tail2 = bottom.col(j).head(h).squaredNorm();
    if (tail2 == 0.0) continue;
    const double mu = std::sqrt(x0 * x0 + tail2);
    const double v0 = x0 <= 0.0 ? x0 - mu : -tail2 / (x0 + mu);
    const double beta = 2.0 * v0 * v0 / (tail2 + v0 * v0);
    v = bottom.col(j).head(h) / v0;
    top(j, j) = mu;
    bottom.col(j).head(h).setZero();
    if (trailing == 0) continue;
    w.noalias() = v.transpose() * bottom.block(0, j + 1, h, trailing);
    w += top.row(j).tail(trailing);
    top.row(j).tail(trailing) -= beta * w;
    bottom.block(0, j + 1, h, trailing).noalias() -= (beta * v) * w;
  }
  Eigen::MatrixXd r = top.triangularView<Eigen::Upper>();
  for (Index k = 0; k < cols; ++k)
    if (r(k, k) < 0.0) r.row(k) *= -1.0;
  return r;
}

double log_det_triangular(const Eigen::MatrixXd& r1) {
  double acc = 0.0;
  for (Index k = 0; k < r1.rows(); ++k) {
    if (!(r1(k, k) > 0.0)) throw NumericalError("triangular factor R1 is singular");
    acc += std::log(r1(k, k));
  }
  return acc;
}

// Common tail of Algorithms A and B: given any K = F F^T, the QR of
// [R_d1 F, R_d2; s I, 0] carries log det(s2 I + F^T Phi Phi^T F) and the
// residual. `lower` selects the triangle F lives in.
ObjectiveEvaluation factor_route(const Eigen::MatrixXd& f, bool lower, double sigma2,
                                 const PreprocessedData& pre) {
  const Index n = pre.n;
  Eigen::MatrixXd stack = Eigen::MatrixXd::Zero(2 * n + 1, n + 1);
  if (lower)
    stack.topLeftCorner(n + 1, n).noalias() = pre.r_d1 * f.triangularView<Eigen::Lower>();
  else
    stack.topLeftCorner(n + 1, n).noalias() = pre.r_d1 * f.triangularView<Eigen::Upper>();
  stack.col(n).head(n + 1) = pre.r_d2;
  stack.bottomLeftCorner(n, n).diagonal().setConstant(std::sqrt(sigma2));

  ObjectiveEvaluation out;
  split_factor(positive_r(stack), out);
  const double r = out.r_scalar;
  out.value = r * r / sigma2 + static_cast<double>(pre.samples - n) * std::log(sigma2) +
              2.0 * log_det_triangular(out.r1);
  return out;
}

void finish_algorithm_c(const DcHyperparams& hyper, double sigma2, const PreprocessedData& pre,
                        ObjectiveEvaluation& out) {
  const Index n = pre.n;
  const double r = out.r_scalar;
  out.value = r * r / sigma2 + static_cast<double>(pre.samples - n) * std::log(sigma2) +
              dc_logdet(hyper, n) + 2.0 * log_det_triangular(out.r1);
  out.flops = flops::algorithm_c(n);
}

}  // namespace

double FlopTally::total() const {
  return std::accumulate(stages.begin(), stages.end(), 0.0,
                         [](double acc, const auto& s) { return acc + s.second; });
}

namespace flops {

double preprocessing(Index n, Index samples) {
  const auto p = static_cast<double>(n + 1);
  return 2.0 * p * p * (static_cast<double>(samples) - p / 3.0);
}

double stacked_qr(Index n) {
  const auto p = static_cast<double>(n + 1);
  return 2.0 * p * p * (2.0 * static_cast<double>(n) + 1.0 - p / 3.0);
}

FlopTally algorithm_a(Index n) {
  const auto x = static_cast<double>(n);
  return {{{"cholesky", x * x * x / 3.0 + x * x / 2.0 + x / 6.0},
           {"matmul", x * x * (x + 1.0)},
           {"qr", stacked_qr(n)},
           {"objective", 2.0 * x + 6.0}}};
}

FlopTally algorithm_b(Index n) {
  const auto x = static_cast<double>(n);
  return {{{"matmul", x * x * (x + 1.0)}, {"qr", stacked_qr(n)}, {"objective", 2.0 * x + 6.0}}};
}

FlopTally algorithm_c(Index n) {
  const auto x = static_cast<double>(n);
  return {{{"qr", stacked_qr(n)}, {"objective", x + 20.0}}};
}

}  // namespace flops

PreprocessedData preprocess(const Eigen::MatrixXd& phi_t, const Eigen::VectorXd& y) {
  const Index samples = phi_t.rows();
  const Index n = phi_t.cols();
  if (y.size() != samples) throw DomainError("output length does not match regressor rows");
  if (samples < n + 1)
    throw DomainError("preprocessing needs N >= n + 1 (N=" + std::to_string(samples) +
                      ", n=" + std::to_string(n) + ")");
  Eigen::MatrixXd joint(samples, n + 1);
  joint.leftCols(n) = phi_t;
  joint.col(n) = y;
  const double scale = phi_t.colwise().norm().maxCoeff();
  if (!(scale > 0.0)) throw RankDeficiencyError(0, "regressor is identically zero");

  PreprocessedData pre;
  const Eigen::MatrixXd r = positive_r(joint);
  for (Index k = 0; k < n; ++k) {
    if (r(k, k) <= 1e-10 * scale)
      throw RankDeficiencyError(static_cast<std::size_t>(k),
                                "regressor column " + std::to_string(k) +
                                    " is linearly dependent on earlier columns");
  }
  pre.r_d1 = r.leftCols(n);
  pre.r_d2 = r.col(n);
  pre.y_norm2 = y.squaredNorm();
  pre.n = n;
  pre.samples = samples;
  return pre;
}

PreprocessedData preprocess(const RegressionData& data) { return preprocess(data.phi_t(), data.y()); }

double nll_naive(const DcHyperparams& hyper, double sigma2, const RegressionData& data) {
  require_sigma2(sigma2);
  const KernelMatrix k = build_dc_kernel(hyper, data.n());
  const Eigen::MatrixXd& phi_t = data.phi_t();
  Eigen::MatrixXd sigma = phi_t * k.entries() * phi_t.transpose();
  sigma.diagonal().array() += sigma2;
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw NumericalError("output covariance is not numerically positive definite");
  const Eigen::VectorXd w = llt.matrixL().solve(data.y());
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum() + w.squaredNorm();
}

ObjectiveEvaluation nll_algorithm_a(const DcHyperparams& hyper, double sigma2,
                                    const PreprocessedData& pre) {
  const auto start = Clock::now();
  require_sigma2(sigma2);
  hyper.validate_strict();
  const KernelMatrix k = build_dc_kernel(hyper, pre.n);
  Eigen::LLT<Eigen::MatrixXd> llt(k.entries());
  if (llt.info() != Eigen::Success)
    throw NumericalError("numerical Cholesky of the kernel failed (matrix not numerically positive definite)");
  ObjectiveEvaluation out = factor_route(llt.matrixLLT(), true, sigma2, pre);
  out.flops = flops::algorithm_a(pre.n);
  out.wall_time = Clock::now() - start;
  return out;
}

ObjectiveEvaluation nll_algorithm_b(const DcHyperparams& hyper, double sigma2,
                                    const PreprocessedData& pre) {
  const auto start = Clock::now();
  require_sigma2(sigma2);
  const Eigen::MatrixXd f = dc_cholesky_upper(hyper, pre.n);
  ObjectiveEvaluation out = factor_route(f, false, sigma2, pre);
  out.flops = flops::algorithm_b(pre.n);
  out.wall_time = Clock::now() - start;
  return out;
}

ObjectiveEvaluation nll_algorithm_c(const DcHyperparams& hyper, double sigma2,
                                    const PreprocessedData& pre) {
  const auto start = Clock::now();
  require_sigma2(sigma2);
  const Index n = pre.n;
  const LowerBidiagonal d = dc_inverse_cholesky(hyper, n);

  // [R_d1 R_d2] is already upper triangular, s D^T upper bidiagonal.
  Eigen::MatrixXd top(n + 1, n + 1);
  top.leftCols(n) = pre.r_d1;
  top.col(n) = pre.r_d2;
  Eigen::MatrixXd bottom = Eigen::MatrixXd::Zero(n, n + 1);
  const double s = std::sqrt(sigma2);
  for (Index k = 0; k < n; ++k) bottom(k, k) = s * d.diag(k);
  for (Index k = 0; k + 1 < n; ++k) bottom(k, k + 1) = s * d.sub(k);

  ObjectiveEvaluation out;
  split_factor(triangular_over_banded_r(std::move(top), std::move(bottom)), out);
  finish_algorithm_c(hyper, sigma2, pre, out);
  out.wall_time = Clock::now() - start;
  return out;
}

namespace reference {

ObjectiveEvaluation nll_algorithm_c_dense(const DcHyperparams& hyper, double sigma2,
                                          const PreprocessedData& pre) {
  const auto start = Clock::now();
  require_sigma2(sigma2);
  const Index n = pre.n;
  const LowerBidiagonal d = dc_inverse_cholesky(hyper, n);
  const double s = std::sqrt(sigma2);

  Eigen::MatrixXd stack = Eigen::MatrixXd::Zero(2 * n + 1, n + 1);
  stack.topLeftCorner(n + 1, n) = pre.r_d1;
  stack.col(n).head(n + 1) = pre.r_d2;
  for (Index k = 0; k < n; ++k) stack(n + 1 + k, k) = s * d.diag(k);
  for (Index k = 0; k + 1 < n; ++k) stack(n + 1 + k, k + 1) = s * d.sub(k);

  ObjectiveEvaluation out;
  split_factor(positive_r(stack), out);
  finish_algorithm_c(hyper, sigma2, pre, out);
  out.wall_time = Clock::now() - start;
  return out;
}

}  // namespace reference

Eigen::VectorXd map_estimate(const ObjectiveEvaluation& eval) {
  for (Index k = 0; k < eval.r1.rows(); ++k)
    if (!(eval.r1(k, k) > 0.0)) throw NumericalError("triangular factor R1 is singular");
  return eval.r1.triangularView<Eigen::Upper>().solve(eval.r2);
}

Eigen::VectorXd map_estimate(const DcHyperparams& hyper, double sigma2, const PreprocessedData& pre) {
  return map_estimate(nll_algorithm_c(hyper, sigma2, pre));
}

GradientHessian nll_gradient_hessian(const DcHyperparams& hyper, double sigma2,
                                     const PreprocessedData& pre, bool with_hessian) {
  const ObjectiveEvaluation eval = nll_algorithm_c(hyper, sigma2, pre);
  const Index n = pre.n;
  const TridiagonalMatrix k_inv = dc_inverse(hyper, n);
  const Eigen::MatrixXd k_inv_dense = k_inv.dense();

  // X1 = K^{-1} - s2 K^{-1} (R1^T R1)^{-1} K^{-1};  X2 = b b^T, b = K^{-1} g_map.
  const Eigen::MatrixXd t = eval.r1.transpose().triangularView<Eigen::Lower>().solve(k_inv_dense);
  Eigen::MatrixXd x1 = k_inv_dense;
  x1.noalias() -= sigma2 * t.transpose() * t;
  const Eigen::VectorXd b = k_inv.multiply(map_estimate(eval));
  const Eigen::MatrixXd x1_minus_x2 = x1 - b * b.transpose();

  const KernelGradient dk = dc_kernel_gradient(hyper, n);

  GradientHessian out;
  out.value = eval.value;
  out.hessian.setZero();
  for (std::size_t i = 0; i < 3; ++i)
    out.gradient(static_cast<Index>(i)) = x1_minus_x2.cwiseProduct(dk[i]).sum();
  if (!with_hessian) return out;

  const KernelHessian d2k = dc_kernel_hessian(hyper, n);
  std::array<Eigen::MatrixXd, 3> p;
  std::array<Eigen::VectorXd, 3> q;
  for (std::size_t i = 0; i < 3; ++i) {
    p[i].noalias() = x1 * dk[i];
    q[i].noalias() = dk[i] * b;
  }
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      const double curvature = x1_minus_x2.cwiseProduct(d2k[i][j]).sum();
      const double cross = p[j].cwiseProduct(p[i].transpose()).sum();
      const double data_term = 2.0 * q[i].dot(x1 * q[j]);
      out.hessian(static_cast<Index>(i), static_cast<Index>(j)) = curvature - cross + data_term;
    }
  }
  return out;
}

double nll_sigma2_derivative(const DcHyperparams& hyper, double sigma2, const PreprocessedData& pre) {
  const ObjectiveEvaluation eval = nll_algorithm_c(hyper, sigma2, pre);
  const Index n = pre.n;
  const Eigen::MatrixXd w = eval.r1.transpose().triangularView<Eigen::Lower>().solve(
      Eigen::MatrixXd::Identity(n, n));
  const Eigen::MatrixXd m_inv = w.transpose() * w;
  const TridiagonalMatrix k_inv = dc_inverse(hyper, n);
  double trace_mk = 0.0;
  for (Index a = 0; a < n; ++a) {
    trace_mk += m_inv(a, a) * k_inv.main(a);
    if (a + 1 < n) trace_mk += 2.0 * m_inv(a, a + 1) * k_inv.sub(a);
  }
  // tr(S^{-1}) and |S^{-1} Y|^2 with S = Phi^T K Phi + s2 I.
  const double trace_s_inv = (static_cast<double>(pre.samples - n) + sigma2 * trace_mk) / sigma2;
  const Eigen::VectorXd residual = pre.r_d2 - pre.r_d1 * map_estimate(eval);
  return trace_s_inv - residual.squaredNorm() / (sigma2 * sigma2);
}

std::vector<double> evaluate_batch(const std::vector<DcHyperparams>& points, double sigma2,
                                   const PreprocessedData& pre) {
  std::vector<double> values(points.size(), std::numeric_limits<double>::quiet_NaN());
  const auto count = static_cast<std::ptrdiff_t>(points.size());
#pragma omp parallel for num_threads(parallel::thread_count()) schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      values[static_cast<std::size_t>(i)] =
          nll_algorithm_c(points[static_cast<std::size_t>(i)], sigma2, pre).value;
    } catch (const Error&) {
    }
  }
  return values;
}

namespace reference {

std::vector<double> evaluate_batch_serial(const std::vector<DcHyperparams>& points, double sigma2,
                                          const PreprocessedData& pre) {
  std::vector<double> values;
  values.reserve(points.size());
  for (const DcHyperparams& h : points) {
    try {
      values.push_back(nll_algorithm_c(h, sigma2, pre).value);
    } catch (const Error&) {
      values.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }
  return values;
}

}  // namespace reference

}  // namespace dcsysid
