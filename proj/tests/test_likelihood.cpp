#include <gtest/gtest.h>

#include <cmath>

#include "dcsysid/likelihood.hpp"
#include "dcsysid/parallel.hpp"
#include "oracles.hpp"

using namespace dcsysid;

namespace {

struct Problem {
  RegressionData data;
  PreprocessedData pre;
};

Problem make_problem(Index samples, Index n, std::uint64_t seed, double noise = 0.2) {
  Rng rng(seed);
  const Eigen::VectorXd u = oracle::random_vector(samples, rng);
  const Eigen::VectorXd g = sample_dc_prior({1.0, 0.9, 0.8}, n, seed + 1);
  RegressionData data(u, simulate_fir(g, u, noise, seed + 2), n);
  PreprocessedData pre = preprocess(data);
  return {std::move(data), std::move(pre)};
}

Eigen::MatrixXd positive_diagonal_r(const Eigen::MatrixXd& a) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd r = qr.matrixQR().topRows(a.cols()).triangularView<Eigen::Upper>();
  for (Index k = 0; k < r.rows(); ++k)
    if (r(k, k) < 0) r.row(k) *= -1.0;
  return r;
}

}  // namespace

TEST(Preprocess, OrthonormalRegressorExample) {
  const Index n = 4, samples = 7;
  Eigen::MatrixXd phi_t = Eigen::MatrixXd::Zero(samples, n);
  phi_t.topRows(n).setIdentity();
  Eigen::VectorXd y = Eigen::VectorXd::Zero(samples);
  y(0) = 1.0;
  const PreprocessedData pre = preprocess(phi_t, y);
  Eigen::MatrixXd expected_r1 = Eigen::MatrixXd::Zero(n + 1, n);
  expected_r1.topRows(n).setIdentity();
  EXPECT_LE(oracle::max_abs(pre.r_d1 - expected_r1), 1e-15);
  Eigen::VectorXd expected_r2 = Eigen::VectorXd::Zero(n + 1);
  expected_r2(0) = 1.0;
  EXPECT_LE((pre.r_d2 - expected_r2).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(pre.samples, samples);
  EXPECT_EQ(pre.n, n);
  EXPECT_EQ(pre.y_norm2, 1.0);
}

TEST(Preprocess, GramIdentitiesAndPositiveDiagonal) {
  Rng rng(31);
  const Eigen::MatrixXd phi_t = oracle::random_matrix(100, 10, rng);
  const Eigen::VectorXd y = oracle::random_vector(100, rng);
  const PreprocessedData pre = preprocess(phi_t, y);
  EXPECT_LE(oracle::max_rel(pre.r_d1.transpose() * pre.r_d1, phi_t.transpose() * phi_t), 1e-10);
  EXPECT_LE(oracle::max_rel(pre.r_d1.transpose() * pre.r_d2, phi_t.transpose() * y), 1e-10);
  for (Index k = 0; k < 10; ++k) EXPECT_GT(pre.r_d1(k, k), 0.0);
  EXPECT_GT(pre.r_d2(10), 0.0);
  EXPECT_TRUE(pre.r_d1.topRows(10).isUpperTriangular());
  EXPECT_EQ(pre.r_d1.row(10).norm(), 0.0);
}

TEST(Preprocess, RankDeficiencyNamesColumn) {
  Rng rng(32);
  Eigen::MatrixXd phi_t = oracle::random_matrix(50, 6, rng);
  phi_t.col(3) = phi_t.col(1) - 2.0 * phi_t.col(0);
  try {
    preprocess(phi_t, oracle::random_vector(50, rng));
    FAIL() << "expected RankDeficiencyError";
  } catch (const RankDeficiencyError& e) {
    EXPECT_EQ(e.column(), 3u);
  }
  EXPECT_THROW(preprocess(Eigen::MatrixXd::Zero(10, 2), Eigen::VectorXd::Ones(10)), RankDeficiencyError);
  EXPECT_THROW(preprocess(oracle::random_matrix(4, 4, rng), oracle::random_vector(4, rng)), DomainError);
}

TEST(NaiveObjective, ZeroKernel) {
  const Problem p = make_problem(60, 5, 1);
  const double s2 = 0.3;
  const double expected = 60 * std::log(s2) + p.data.y().squaredNorm() / s2;
  EXPECT_NEAR(nll_naive({0.0, 0.9, 0.8}, s2, p.data), expected, 1e-10 * std::abs(expected));
}

TEST(NaiveObjective, QuadraticTermScalesWithOutput) {
  const Problem p = make_problem(80, 6, 2);
  const DcHyperparams h{1.0, 0.8, 0.5};
  auto at = [&](double scale) {
    return nll_naive(h, 0.2, RegressionData(p.data.u(), scale * p.data.y(), 6));
  };
  const double logdet = at(0.0);
  EXPECT_NEAR(at(2.0) - logdet, 4.0 * (at(1.0) - logdet), 1e-9 * std::abs(at(2.0)));
  EXPECT_GT(at(2.0), at(1.0));
}

TEST(NaiveObjective, MatchesLongDoubleOracle) {
  const Problem p = make_problem(120, 12, 3);
  const DcHyperparams h{1.5, 0.85, 0.6};
  const double ref = static_cast<double>(oracle::nll_ld(h, 0.25, p.data.phi_t(), p.data.y()));
  EXPECT_NEAR(nll_naive(h, 0.25, p.data), ref, 1e-10 * std::abs(ref));
}

TEST(Objective, FourRoutesAgree) {
  const Problem p = make_problem(200, 30, 4);
  const DcHyperparams h{1.0, 0.9, 0.8};
  const double naive = nll_naive(h, 0.2, p.data);
  const double a = nll_algorithm_a(h, 0.2, p.pre).value;
  const double b = nll_algorithm_b(h, 0.2, p.pre).value;
  const double c = nll_algorithm_c(h, 0.2, p.pre).value;
  EXPECT_LE(oracle::rel(naive, c), 1e-6);
  EXPECT_LE(oracle::rel(naive, a), 1e-6);
  EXPECT_LE(oracle::rel(naive, b), 1e-6);
  EXPECT_LE(oracle::rel(a, b), 1e-8);
  EXPECT_LE(oracle::rel(c, reference::nll_algorithm_c_dense(h, 0.2, p.pre).value), 1e-10);
}

TEST(Objective, FourRoutesAgreeOnRandomProblems) {
  Rng rng(5);
  for (int trial = 0; trial < 25; ++trial) {
    const Index n = 2 + static_cast<Index>(rng.uniform() * 38);
    const Index samples = n + 20 + static_cast<Index>(rng.uniform() * 300);
    const Problem p = make_problem(samples, n, 100 + static_cast<std::uint64_t>(trial));
    const DcHyperparams h{rng.uniform(0.2, 5.0), rng.uniform(0.5, 0.99), rng.uniform(-0.9, 0.9)};
    const double s2 = std::pow(10.0, rng.uniform(-2.0, 0.5));
    const double naive = nll_naive(h, s2, p.data);
    const double values[] = {nll_algorithm_a(h, s2, p.pre).value, nll_algorithm_b(h, s2, p.pre).value,
                             nll_algorithm_c(h, s2, p.pre).value};
    for (double v : values) EXPECT_LE(oracle::rel(naive, v), 1e-6) << "trial " << trial;
  }
}

TEST(Objective, ShortcutIdentities) {
  const Problem p = make_problem(150, 15, 6);
  const DcHyperparams h{2.0, 0.8, -0.4};
  const double s2 = 0.3;
  const ObjectiveEvaluation e = nll_algorithm_c(h, s2, p.pre);
  const Eigen::MatrixXd phi = p.data.phi_t().transpose();
  const Eigen::MatrixXd gram = s2 * oracle::dense_inverse(oracle::dc_kernel(h, 15)) + phi * phi.transpose();
  EXPECT_LE(oracle::max_rel(e.r1.transpose() * e.r1, gram), 1e-8);
  EXPECT_LE(oracle::max_rel(e.r1.transpose() * e.r2, phi * p.data.y()), 1e-8);
  EXPECT_LE(oracle::rel(e.r2.squaredNorm() + e.r_scalar * e.r_scalar, p.data.y().squaredNorm()), 1e-8);
  EXPECT_TRUE(e.r1.isUpperTriangular());
  for (Index k = 0; k < 15; ++k) EXPECT_GT(e.r1(k, k), 0.0);
}

TEST(Objective, StackedQrEqualsDirectQr) {
  const Problem p = make_problem(120, 10, 7);
  const DcHyperparams h{1.0, 0.85, 0.5};
  const double s2 = 0.2;
  const ObjectiveEvaluation e = nll_algorithm_c(h, s2, p.pre);
  // [Phi^T Y; s D^T 0] with D D^T = K^{-1} from a numerical factorization.
  const Eigen::MatrixXd d = oracle::dense_inverse(oracle::dc_kernel(h, 10)).llt().matrixL();
  Eigen::MatrixXd big = Eigen::MatrixXd::Zero(120 + 10, 11);
  big.topLeftCorner(120, 10) = p.data.phi_t();
  big.topRightCorner(120, 1) = p.data.y();
  big.bottomLeftCorner(10, 10) = std::sqrt(s2) * d.transpose();
  const Eigen::MatrixXd r = positive_diagonal_r(big);
  EXPECT_LE(oracle::max_rel(e.r1, r.topLeftCorner(10, 10)), 1e-8);
  EXPECT_LE((e.r2 - r.topRightCorner(10, 1)).cwiseAbs().maxCoeff(), 1e-8 * r.topRightCorner(10, 1).cwiseAbs().maxCoeff());
  EXPECT_NEAR(e.r_scalar, r(10, 10), 1e-8 * r(10, 10));
}

TEST(Objective, CompressedDataGivesSameValue) {
  const Problem p = make_problem(200, 12, 8);
  const DcHyperparams h{1.0, 0.9, 0.7};
  PreprocessedData again = preprocess(p.pre.r_d1, p.pre.r_d2);
  EXPECT_LE(oracle::max_abs(again.r_d1 - p.pre.r_d1), 1e-12 * oracle::max_abs(p.pre.r_d1));
  again.samples = p.pre.samples;
  EXPECT_LE(oracle::rel(nll_algorithm_c(h, 0.2, again).value, nll_algorithm_c(h, 0.2, p.pre).value), 1e-10);
}

TEST(Objective, ErrorsOnBadArguments) {
  const Problem p = make_problem(50, 5, 9);
  EXPECT_THROW(nll_algorithm_c({1.0, 0.9, 0.8}, 0.0, p.pre), DomainError);
  EXPECT_THROW(nll_algorithm_c({1.0, 0.9, 0.8}, -1.0, p.pre), DomainError);
  EXPECT_THROW(nll_algorithm_c({1.0, 0.9, 1.0}, 0.2, p.pre), SingularityError);
  EXPECT_THROW(nll_algorithm_b({0.0, 0.9, 0.5}, 0.2, p.pre), SingularityError);
  EXPECT_THROW(nll_naive({1.0, 0.9, 0.8}, 0.0, p.data), DomainError);
}

TEST(Objective, AlgorithmCStableWhereKernelIsIllConditioned) {
  const Problem p = make_problem(500, 125, 10);
  const DcHyperparams h{1.0, 0.6, 0.98};
  const ObjectiveEvaluation e = nll_algorithm_c(h, 0.2, p.pre);
  ASSERT_TRUE(std::isfinite(e.value));
  const double ref = static_cast<double>(oracle::nll_ld(h, 0.2, p.data.phi_t(), p.data.y()));
  EXPECT_LE(oracle::rel(e.value, ref), 1e-4);
}

TEST(Flops, PublishedStepCounts) {
  EXPECT_DOUBLE_EQ(flops::algorithm_a(3).stages.at(0).second, 14.0);
  const Index n = 125, samples = 500;
  const double p = n + 1.0;
  EXPECT_DOUBLE_EQ(flops::preprocessing(n, samples), 2 * p * p * (samples - p / 3));
  EXPECT_DOUBLE_EQ(flops::algorithm_c(n).total(), 2 * p * p * (2.0 * n + 1 - p / 3) + n + 20);
  const FlopTally a = flops::algorithm_a(n);
  ASSERT_EQ(a.stages.size(), 4u);
  const double x = n;
  EXPECT_DOUBLE_EQ(a.stages[0].second, x * x * x / 3 + x * x / 2 + x / 6);
  EXPECT_DOUBLE_EQ(a.stages[1].second, x * x * (x + 1));
  EXPECT_DOUBLE_EQ(a.stages[2].second, 2 * p * p * (2 * x + 1 - p / 3));
  EXPECT_DOUBLE_EQ(a.stages[3].second, 2 * x + 6);
}

TEST(Flops, AlgorithmCCheaperFromOrderEightAndTrendsToTwentyEightPercent) {
  for (Index n = 8; n <= 2000; ++n) EXPECT_LT(flops::algorithm_c(n).total(), flops::algorithm_a(n).total()) << n;
  const double saving = 1.0 - flops::algorithm_c(500).total() / flops::algorithm_a(500).total();
  EXPECT_NEAR(saving, 0.28, 0.01);
}

TEST(Flops, AttachedToEvaluations) {
  const Problem p = make_problem(60, 8, 11);
  const DcHyperparams h;
  EXPECT_EQ(nll_algorithm_a(h, 0.2, p.pre).flops.total(), flops::algorithm_a(8).total());
  EXPECT_EQ(nll_algorithm_b(h, 0.2, p.pre).flops.total(), flops::algorithm_b(8).total());
  EXPECT_EQ(nll_algorithm_c(h, 0.2, p.pre).flops.total(), flops::algorithm_c(8).total());
  EXPECT_GT(nll_algorithm_c(h, 0.2, p.pre).wall_time.count(), 0);
}

TEST(Map, MatchesDirectPosteriorMean) {
  const Problem p = make_problem(200, 30, 12);
  const DcHyperparams h{1.0, 0.9, 0.8};
  const Eigen::VectorXd g = map_estimate(h, 0.2, p.pre);
  const Eigen::VectorXd direct = oracle::map_direct(h, 0.2, p.data.phi_t(), p.data.y());
  EXPECT_LE((g - direct).cwiseAbs().maxCoeff(), 1e-6 * direct.cwiseAbs().maxCoeff());
  EXPECT_EQ(g, map_estimate(nll_algorithm_c(h, 0.2, p.pre)));
}

TEST(Map, ShrinksTowardZeroAsNoiseGrows) {
  // Individual coefficients of a generalized ridge estimate need not shrink
  // monotonically; the prior-weighted norm does, and every entry vanishes in
  // the limit.
  const Problem p = make_problem(200, 20, 13);
  const DcHyperparams h{1.0, 0.9, 0.8};
  const Eigen::MatrixXd k_inv = oracle::dense_inverse(oracle::dc_kernel(h, 20));
  double previous = INFINITY;
  for (double s2 : {1.0, 10.0, 100.0}) {
    const Eigen::VectorXd g = map_estimate(h, s2, p.pre);
    const double weighted = g.dot(k_inv * g);
    EXPECT_LT(weighted, previous) << s2;
    previous = weighted;
  }
  const double scale = map_estimate(h, 1.0, p.pre).cwiseAbs().maxCoeff();
  EXPECT_LE(map_estimate(h, 1e8, p.pre).cwiseAbs().maxCoeff(), 1e-4 * scale);
}

TEST(Map, NoiselessImpulseDataRecoversPriorDraw) {
  const Index n = 20;
  const DcHyperparams h{1.0, 0.85, 0.7};
  const Eigen::VectorXd g = sample_dc_prior(h, n, 21);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n + 1);
  u(0) = 1.0;
  const RegressionData data(u, simulate_fir(g, u, 0.0, 0), n);
  const Eigen::VectorXd g_hat = map_estimate(h, 1e-8, preprocess(data));
  for (Index k = 0; k < n; ++k) EXPECT_NEAR(g_hat(k), g(k), 1e-3 * std::abs(g(k))) << k;
}

TEST(Derivatives, GradientMatchesFiniteDifferences) {
  const Problem p = make_problem(150, 20, 14);
  const DcHyperparams h{1.0, 0.7, 0.5};
  const GradientHessian gh = nll_gradient_hessian(h, 0.2, p.pre);
  EXPECT_NEAR(gh.value, nll_algorithm_c(h, 0.2, p.pre).value, 1e-12 * std::abs(gh.value));
  for (int k = 0; k < 3; ++k) {
    auto f = [&](double x) {
      DcHyperparams q = h;
      (k == 0 ? q.c : k == 1 ? q.lambda : q.rho) = x;
      return nll_algorithm_c(q, 0.2, p.pre).value;
    };
    const double x0 = k == 0 ? h.c : k == 1 ? h.lambda : h.rho;
    const double fd = oracle::central_difference(f, x0, 1e-6);
    EXPECT_NEAR(gh.gradient(k), fd, 1e-4 * std::abs(fd)) << "coordinate " << k;
  }
}

TEST(Derivatives, HessianSymmetricAndMatchesGradientDifferences) {
  const Problem p = make_problem(150, 20, 15);
  const DcHyperparams h{1.3, 0.75, 0.4};
  const GradientHessian gh = nll_gradient_hessian(h, 0.2, p.pre);
  const double scale = gh.hessian.cwiseAbs().maxCoeff();
  EXPECT_LE((gh.hessian - gh.hessian.transpose()).cwiseAbs().maxCoeff(), 1e-8 * scale);
  const double step = 1e-5;
  for (int k = 0; k < 3; ++k) {
    DcHyperparams up = h, down = h;
    (k == 0 ? up.c : k == 1 ? up.lambda : up.rho) += step;
    (k == 0 ? down.c : k == 1 ? down.lambda : down.rho) -= step;
    const Eigen::Vector3d fd = (nll_gradient_hessian(up, 0.2, p.pre, false).gradient -
                                nll_gradient_hessian(down, 0.2, p.pre, false).gradient) /
                               (2 * step);
    for (int j = 0; j < 3; ++j)
      EXPECT_NEAR(gh.hessian(j, k), fd(j), 1e-4 * std::max(std::abs(fd(j)), 1e-3 * scale)) << j << "," << k;
  }
  EXPECT_EQ(nll_gradient_hessian(h, 0.2, p.pre, false).hessian, Eigen::Matrix3d::Zero());
}

TEST(Derivatives, NoiseVarianceDerivative) {
  const Problem p = make_problem(150, 20, 16);
  const DcHyperparams h{1.0, 0.8, 0.6};
  auto f = [&](double s2) { return nll_algorithm_c(h, s2, p.pre).value; };
  for (double s2 : {0.05, 0.2, 1.0}) {
    const double fd = oracle::central_difference(f, s2, 1e-6 * s2);
    EXPECT_NEAR(nll_sigma2_derivative(h, s2, p.pre), fd, 1e-5 * std::max(1.0, std::abs(fd))) << s2;
  }
}

TEST(Batch, ParallelEqualsSerialAndMarksFailures) {
  const Problem p = make_problem(120, 15, 17);
  Rng rng(18);
  std::vector<DcHyperparams> points;
  for (int k = 0; k < 40; ++k) points.push_back({rng.uniform(0.1, 3.0), rng.uniform(0.3, 0.99), rng.uniform(-0.95, 0.95)});
  points.push_back({1.0, 0.9, 1.0});  // singular
  const std::vector<double> serial = reference::evaluate_batch_serial(points, 0.2, p.pre);
  EXPECT_TRUE(std::isnan(serial.back()));
  for (int threads : {1, 3}) {
    parallel::set_thread_count(threads);
    const std::vector<double> par = evaluate_batch(points, 0.2, p.pre);
    ASSERT_EQ(par.size(), serial.size());
    for (std::size_t k = 0; k + 1 < par.size(); ++k) EXPECT_EQ(par[k], serial[k]);
    EXPECT_TRUE(std::isnan(par.back()));
  }
  parallel::set_thread_count(1);
}
