#include "dcsysid/regression.hpp"

#include <cmath>

#include "dcsysid/rng.hpp"

namespace dcsysid {

Eigen::MatrixXd build_regressor(const Eigen::VectorXd& u, Index n) {
  if (u.size() == 0) throw DomainError("input sequence is empty");
  if (n < 1) throw DomainError("FIR order must be >= 1");
  const Index samples = u.size();
  Eigen::MatrixXd phi_t = Eigen::MatrixXd::Zero(samples, n);
  // Column k is u delayed by k + 1 samples.
  for (Index k = 0; k < n && k + 1 < samples; ++k)
    phi_t.col(k).tail(samples - k - 1) = u.head(samples - k - 1);
  return phi_t;
}

RegressionData::RegressionData(Eigen::VectorXd u, Eigen::VectorXd y, Index n)
    : u_(std::move(u)), y_(std::move(y)), n_(n) {
  if (u_.size() != y_.size())
    throw DomainError("input and output lengths differ: " + std::to_string(u_.size()) + " vs " +
                      std::to_string(y_.size()));
  phi_t_ = build_regressor(u_, n_);
}

std::vector<std::string> RegressionData::diagnostics() const {
  std::vector<std::string> notes;
  if (n_ > samples())
    notes.push_back("FIR order n=" + std::to_string(n_) + " exceeds sample count N=" +
                    std::to_string(samples()));
  return notes;
}

Eigen::VectorXd simulate_fir(const Eigen::VectorXd& g, const Eigen::VectorXd& u, double sigma2,
                             std::uint64_t seed) {
  if (!(sigma2 >= 0.0)) throw DomainError("noise variance must be >= 0");
  if (u.size() == 0) throw DomainError("input sequence is empty");
  const Index samples = u.size();
  Eigen::VectorXd y = Eigen::VectorXd::Zero(samples);
  for (Index t = 0; t < samples; ++t) {
    double acc = 0.0;
    for (Index k = 0; k < g.size() && k < t; ++k) acc += g(k) * u(t - k - 1);
    y(t) = acc;
  }
  if (sigma2 > 0.0) {
    Rng rng(seed);
    const double sd = std::sqrt(sigma2);
    for (Index t = 0; t < samples; ++t) y(t) += sd * rng.normal();
  }
  return y;
}

Eigen::VectorXd sample_dc_prior(const DcHyperparams& hyper, Index n, std::uint64_t seed) {
  hyper.validate_strict();
  if (n < 1) throw DomainError("order n must be >= 1");
  Rng rng(seed);
  Eigen::VectorXd z(n);
  for (Index k = 0; k < n; ++k) z(k) = rng.normal();
  return dc_cholesky_upper(hyper, n).triangularView<Eigen::Upper>() * z;
}

LeastSquaresEstimate ls_estimate(const RegressionData& data) {
  const Index n = data.n();
  const Index samples = data.samples();
  if (samples <= n)
    throw DomainError("least squares needs N > n (N=" + std::to_string(samples) +
                      ", n=" + std::to_string(n) + "); use more data or a smaller order");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(data.phi_t());
  qr.setThreshold(1e-10);
  if (qr.rank() < n) {
    const auto column = static_cast<std::size_t>(qr.colsPermutation().indices()(qr.rank()));
    throw RankDeficiencyError(column,
                              "regressor is rank deficient (rank " + std::to_string(qr.rank()) +
                                  " < n=" + std::to_string(n) +
                                  "); the problem is ill-posed, try a larger N, a smaller n or a "
                                  "more exciting input");
  }
  LeastSquaresEstimate est;
  est.g = qr.solve(data.y());
  est.sigma2 = (data.y() - data.phi_t() * est.g).squaredNorm() / static_cast<double>(samples - n);
  return est;
}

}  // namespace dcsysid
