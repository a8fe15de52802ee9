#include "dcsysid/tuner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <tuple>

#include "dcsysid/parallel.hpp"

namespace dcsysid {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// An estimate closer than this fraction of the box width to a bound (log
// scale for c) is reported as a boundary hit.
constexpr double kBoundaryFraction = 1e-6;

double box_fraction(double x, Interval b, bool log_scale) {
  if (log_scale) return (std::log(x) - std::log(b.lo)) / (std::log(b.hi) - std::log(b.lo));
  return (x - b.lo) / (b.hi - b.lo);
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double logit(double p) {
  p = std::clamp(p, 1e-12, 1.0 - 1e-12);
  return std::log(p / (1.0 - p));
}

struct Point {
  DcHyperparams hyper;
  double sigma2 = 0.0;
};

// Bijection between the box and R^3 (R^4 when sigma2 is tuned jointly).
class Coordinates {
 public:
  Coordinates(const TunerConfig& cfg, double sigma2_fixed)
      : cfg_(cfg), sigma2_fixed_(sigma2_fixed),
        joint_(cfg.sigma2_policy.kind == Sigma2Policy::Kind::joint),
        log_c_lo_(std::log(cfg.c_bounds.lo)), log_c_hi_(std::log(cfg.c_bounds.hi)) {}

  Index dims() const { return joint_ ? 4 : 3; }
  bool joint() const { return joint_; }

  Point to_point(const Eigen::VectorXd& z) const {
    Point p;
    p.hyper.c = std::exp(log_c_lo_ + (log_c_hi_ - log_c_lo_) * sigmoid(z(0)));
    const Interval& lam = cfg_.lambda_bounds;
    p.hyper.lambda = lam.lo + (lam.hi - lam.lo) * sigmoid(z(1));
    const Interval& rho = cfg_.rho_bounds;
    p.hyper.rho = 0.5 * (rho.lo + rho.hi) + 0.5 * (rho.hi - rho.lo) * std::tanh(z(2));
    p.sigma2 = joint_ ? std::exp(z(3)) : sigma2_fixed_;
    return p;
  }

  Eigen::VectorXd to_z(const Point& p) const {
    Eigen::VectorXd z(dims());
    z(0) = logit((std::log(p.hyper.c) - log_c_lo_) / (log_c_hi_ - log_c_lo_));
    const Interval& lam = cfg_.lambda_bounds;
    z(1) = logit((p.hyper.lambda - lam.lo) / (lam.hi - lam.lo));
    const Interval& rho = cfg_.rho_bounds;
    const double unit = (p.hyper.rho - 0.5 * (rho.lo + rho.hi)) / (0.5 * (rho.hi - rho.lo));
    z(2) = std::atanh(std::clamp(unit, -1.0 + 1e-12, 1.0 - 1e-12));
    if (joint_) z(3) = std::log(p.sigma2);
    return z;
  }

  /// d(parameter_k) / d(z_k); the map is separable.
  Eigen::VectorXd jacobian(const Eigen::VectorXd& z, const Point& p) const {
    Eigen::VectorXd j(dims());
    const double s0 = sigmoid(z(0));
    j(0) = p.hyper.c * (log_c_hi_ - log_c_lo_) * s0 * (1.0 - s0);
    const double s1 = sigmoid(z(1));
    j(1) = (cfg_.lambda_bounds.hi - cfg_.lambda_bounds.lo) * s1 * (1.0 - s1);
    const double t = std::tanh(z(2));
    j(2) = 0.5 * (cfg_.rho_bounds.hi - cfg_.rho_bounds.lo) * (1.0 - t * t);
    if (joint_) j(3) = p.sigma2;
    return j;
  }

 private:
  const TunerConfig& cfg_;
  double sigma2_fixed_;
  bool joint_;
  double log_c_lo_;
  double log_c_hi_;
};

// Objective wrapper that counts evaluations against a budget and remembers
// the best point seen.
class Budgeted {
 public:
  Budgeted(const Coordinates& coords, const PreprocessedData& pre, int budget)
      : coords_(coords), pre_(pre), budget_(budget) {}

  bool exhausted() const { return evaluations_ >= budget_; }
  int evaluations() const { return evaluations_; }
  const Eigen::VectorXd& best_z() const { return best_z_; }
  double best_value() const { return best_value_; }
  std::chrono::nanoseconds eval_time() const { return eval_time_; }

  double value(const Eigen::VectorXd& z) {
    ++evaluations_;
    double v = kInf;
    try {
      const Point p = coords_.to_point(z);
      const ObjectiveEvaluation e = nll_algorithm_c(p.hyper, p.sigma2, pre_);
      eval_time_ += e.wall_time;
      if (std::isfinite(e.value)) v = e.value;
    } catch (const Error&) {
    }
    record(z, v);
    return v;
  }

  std::pair<double, Eigen::VectorXd> value_gradient(const Eigen::VectorXd& z) {
    ++evaluations_;
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(z.size());
    double v = kInf;
    try {
      const auto start = std::chrono::steady_clock::now();
      const Point p = coords_.to_point(z);
      const GradientHessian gh = nll_gradient_hessian(p.hyper, p.sigma2, pre_, false);
      const Eigen::VectorXd jac = coords_.jacobian(z, p);
      grad.head(3) = gh.gradient.cwiseProduct(jac.head(3));
      if (coords_.joint()) grad(3) = nll_sigma2_derivative(p.hyper, p.sigma2, pre_) * jac(3);
      eval_time_ += std::chrono::steady_clock::now() - start;
      if (std::isfinite(gh.value) && grad.allFinite()) v = gh.value;
    } catch (const Error&) {
    }
    record(z, v);
    return {v, grad};
  }

 private:
  void record(const Eigen::VectorXd& z, double v) {
    if (best_z_.size() == 0 || v < best_value_) {
      best_z_ = z;
      best_value_ = v;
    }
  }

  const Coordinates& coords_;
  const PreprocessedData& pre_;
  int budget_;
  int evaluations_ = 0;
  Eigen::VectorXd best_z_;
  double best_value_ = kInf;
  std::chrono::nanoseconds eval_time_{0};
};

bool objective_settled(double f_lo, double f_hi, double tol) {
  return std::isfinite(f_hi) && (f_hi - f_lo) <= tol * std::max(1.0, std::abs(f_lo));
}

// Nelder-Mead with standard coefficients (1, 2, 1/2, 1/2).
bool nelder_mead(Budgeted& f, const Eigen::VectorXd& z0, double tol_obj, double tol_x) {
  const Index d = z0.size();
  std::vector<Eigen::VectorXd> simplex{z0};
  std::vector<double> values{f.value(z0)};
  for (Index i = 0; i < d && !f.exhausted(); ++i) {
    Eigen::VectorXd v = z0;
    v(i) += 0.5;
    simplex.push_back(v);
    values.push_back(f.value(v));
  }
  if (static_cast<Index>(simplex.size()) < d + 1) return false;

  std::vector<std::size_t> order(simplex.size());
  while (!f.exhausted()) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second_worst = order[order.size() - 2];

    double diameter = 0.0;
    for (const auto& v : simplex)
      diameter = std::max(diameter, (v - simplex[best]).cwiseAbs().maxCoeff());
    if (objective_settled(values[best], values[worst], tol_obj) && diameter <= tol_x) return true;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (std::size_t k = 0; k + 1 < order.size(); ++k) centroid += simplex[order[k]];
    centroid /= static_cast<double>(d);

    const Eigen::VectorXd reflected = centroid + (centroid - simplex[worst]);
    const double f_reflected = f.value(reflected);
    if (f_reflected < values[best]) {
      if (f.exhausted()) break;
      const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - simplex[worst]);
      const double f_expanded = f.value(expanded);
      if (f_expanded < f_reflected) {
        simplex[worst] = expanded;
        values[worst] = f_expanded;
      } else {
        simplex[worst] = reflected;
        values[worst] = f_reflected;
      }
      continue;
    }
    if (f_reflected < values[second_worst]) {
      simplex[worst] = reflected;
      values[worst] = f_reflected;
      continue;
    }
    if (f.exhausted()) break;
    const bool outside = f_reflected < values[worst];
    const Eigen::VectorXd contracted = outside ? Eigen::VectorXd(centroid + 0.5 * (reflected - centroid))
                                               : Eigen::VectorXd(centroid + 0.5 * (simplex[worst] - centroid));
    const double f_contracted = f.value(contracted);
    if (outside ? f_contracted <= f_reflected : f_contracted < values[worst]) {
      simplex[worst] = contracted;
      values[worst] = f_contracted;
      continue;
    }
    for (std::size_t k = 0; k < simplex.size() && !f.exhausted(); ++k) {
      if (k == best) continue;
      simplex[k] = simplex[best] + 0.5 * (simplex[k] - simplex[best]);
      values[k] = f.value(simplex[k]);
    }
  }
  return false;
}

// BFGS with Armijo backtracking on the transformed coordinates.
bool bfgs(Budgeted& f, const Eigen::VectorXd& z0, double tol_obj, double tol_x) {
  const Index d = z0.size();
  Eigen::VectorXd x = z0;
  auto [fx, g] = f.value_gradient(x);
  if (!std::isfinite(fx)) return false;
  Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(d, d);
  while (!f.exhausted()) {
    if (g.cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, std::abs(fx))) return true;
    Eigen::VectorXd p = -h_inv * g;
    if (g.dot(p) >= 0.0) {
      h_inv.setIdentity();
      p = -g;
    }
    const double longest = p.cwiseAbs().maxCoeff();
    if (longest > 2.0) p *= 2.0 / longest;

    double t = 1.0;
    double f_trial = kInf;
    Eigen::VectorXd trial;
    bool accepted = false;
    for (int k = 0; k < 40 && !f.exhausted(); ++k, t *= 0.5) {
      trial = x + t * p;
      f_trial = f.value(trial);
      if (f_trial <= fx + 1e-4 * t * g.dot(p)) {
        accepted = true;
        break;
      }
    }
    if (!accepted || f.exhausted()) return false;
    auto [f_new, g_new] = f.value_gradient(trial);
    if (!std::isfinite(f_new)) return false;
    const Eigen::VectorXd s = trial - x;
    const Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
      h_inv = (eye - rho * s * y.transpose()) * h_inv * (eye - rho * y * s.transpose()) +
              rho * s * s.transpose();
    }
    const bool settled = objective_settled(f_new, fx, tol_obj) && s.cwiseAbs().maxCoeff() <= tol_x;
    x = trial;
    fx = f_new;
    g = g_new;
    if (settled) return true;
  }
  return false;
}

// Deterministic low-discrepancy design over a central region of the box.
double halton(std::uint64_t index, std::uint64_t base) {
  double f = 1.0;
  double r = 0.0;
  while (index > 0) {
    f /= static_cast<double>(base);
    r += f * static_cast<double>(index % base);
    index /= base;
  }
  return r;
}

double clamp_open(double v, const Interval& box) {
  const double margin = 1e-6 * (box.hi - box.lo);
  return std::clamp(v, box.lo + margin, box.hi - margin);
}

double guess_scale(const std::optional<Eigen::VectorXd>& g_ls, double lambda) {
  if (!g_ls || g_ls->size() == 0) return 1.0;
  double prior_mass = 0.0;
  for (Index k = 0; k < g_ls->size(); ++k) prior_mass += std::pow(lambda, static_cast<double>(k + 1));
  const double c = g_ls->squaredNorm() / prior_mass;
  return std::isfinite(c) && c > 0.0 ? c : 1.0;
}

std::vector<DcHyperparams> start_points(const TunerConfig& cfg,
                                        const std::optional<Eigen::VectorXd>& g_ls) {
  std::vector<DcHyperparams> starts = cfg.initial_points;
  std::uint64_t index = 1 + 7919 * cfg.seed;
  while (static_cast<int>(starts.size()) < cfg.restarts) {
    DcHyperparams h;
    h.lambda = clamp_open(0.5 + 0.49 * halton(index, 2), cfg.lambda_bounds);
    h.rho = clamp_open(-0.3 + 1.28 * halton(index, 3), cfg.rho_bounds);
    h.c = guess_scale(g_ls, h.lambda);
    starts.push_back(h);
    ++index;
  }
  for (DcHyperparams& h : starts) {
    h.c = std::clamp(h.c, cfg.c_bounds.lo, cfg.c_bounds.hi);
    h.lambda = clamp_open(h.lambda, cfg.lambda_bounds);
    h.rho = clamp_open(h.rho, cfg.rho_bounds);
  }
  return starts;
}

// Smaller objective wins; ties go to the smallest (lambda, |rho|, c).
bool better(const RestartDiagnostics& a, const RestartDiagnostics& b) {
  if (a.objective != b.objective) return a.objective < b.objective;
  return std::make_tuple(a.end.lambda, std::abs(a.end.rho), a.end.c) <
         std::make_tuple(b.end.lambda, std::abs(b.end.rho), b.end.c);
}

std::string describe_failures(const std::vector<RestartDiagnostics>& runs) {
  std::ostringstream os;
  os << "all " << runs.size() << " restarts failed to produce a finite objective";
  for (std::size_t k = 0; k < runs.size(); ++k)
    os << "; restart " << k << " (lambda=" << runs[k].start.lambda << ", rho=" << runs[k].start.rho
       << ", c=" << runs[k].start.c << "): " << runs[k].failure;
  return os.str();
}

}  // namespace

void TunerConfig::validate() const {
  auto check_box = [](const Interval& b, const char* name) {
    if (!(b.lo < b.hi)) throw DomainError(std::string("empty bounds for ") + name);
  };
  check_box(c_bounds, "c");
  check_box(lambda_bounds, "lambda");
  check_box(rho_bounds, "rho");
  if (!(c_bounds.lo > 0.0)) throw DomainError("c bounds must be > 0");
  if (!(lambda_bounds.lo > 0.0 && lambda_bounds.hi < 1.0))
    throw DomainError("lambda bounds must lie strictly inside (0, 1)");
  if (!(rho_bounds.lo > -1.0 && rho_bounds.hi < 1.0))
    throw DomainError("rho bounds must lie strictly inside (-1, 1)");
  if (restarts < 1) throw DomainError("restarts must be >= 1");
  if (!(tol_obj > 0.0) || !(tol_x > 0.0)) throw DomainError("tolerances must be > 0");
  if (max_evals < 1) throw DomainError("max_evals must be >= 1");
  if (sigma2_policy.kind == Sigma2Policy::Kind::fixed && !(sigma2_policy.value > 0.0))
    throw DomainError("fixed noise variance must be > 0");
}

IdentificationResult tune(const PreprocessedData& pre, double sigma2_ls,
                          const std::optional<Eigen::VectorXd>& g_ls, const TunerConfig& cfg) {
  cfg.validate();
  double sigma2 = sigma2_ls;
  if (cfg.sigma2_policy.kind == Sigma2Policy::Kind::fixed) sigma2 = cfg.sigma2_policy.value;
  if (!(sigma2 > 0.0)) throw TuningError("noise variance estimate is not positive");

  const Coordinates coords(cfg, sigma2);
  const std::vector<DcHyperparams> starts = start_points(cfg, g_ls);
  const auto count = static_cast<std::ptrdiff_t>(starts.size());
  std::vector<RestartDiagnostics> runs(starts.size());
  std::vector<std::chrono::nanoseconds> times(starts.size());

#pragma omp parallel for num_threads(parallel::thread_count()) schedule(dynamic)
  for (std::ptrdiff_t k = 0; k < count; ++k) {
    const auto idx = static_cast<std::size_t>(k);
    RestartDiagnostics& run = runs[idx];
    run.start = starts[idx];
    const Eigen::VectorXd z0 = coords.to_z({starts[idx], sigma2});
    Budgeted f(coords, pre, cfg.max_evals);
    run.converged = cfg.solver == SolverKind::derivative_free
                        ? nelder_mead(f, z0, cfg.tol_obj, cfg.tol_x)
                        : bfgs(f, z0, cfg.tol_obj, cfg.tol_x);
    run.evaluations = f.evaluations();
    times[idx] = f.eval_time();
    // The start is always evaluated first, so best <= start objective.
    const Point start_point = coords.to_point(z0);
    run.start_objective = kInf;
    try {
      run.start_objective = nll_algorithm_c(start_point.hyper, start_point.sigma2, pre).value;
    } catch (const Error&) {
    }
    if (f.best_z().size() == 0 || !std::isfinite(f.best_value())) {
      run.objective = kInf;
      run.end = run.start;
      run.failure = "objective was not finite at any evaluated point";
      continue;
    }
    // A budget of one evaluation returns the start exactly, not its round trip
    // through the coordinate map.
    const bool at_start = f.best_z() == z0;
    const Point best = coords.to_point(f.best_z());
    run.end = at_start ? starts[idx] : best.hyper;
    run.sigma2 = best.sigma2;
    run.objective = at_start && std::isfinite(run.start_objective) ? run.start_objective
                                                                    : f.best_value();
  }

  IdentificationResult result;
  TuningDiagnostics& diag = result.diagnostics;
  std::chrono::nanoseconds total_time{0};
  for (std::size_t k = 0; k < runs.size(); ++k) {
    diag.evaluations += runs[k].evaluations;
    total_time += times[k];
    if (!std::isfinite(runs[k].objective)) continue;
    if (diag.winner < 0 || better(runs[k], runs[static_cast<std::size_t>(diag.winner)]))
      diag.winner = static_cast<int>(k);
  }
  diag.restarts = runs;
  if (diag.winner < 0) throw TuningError(describe_failures(runs));

  const RestartDiagnostics& win = runs[static_cast<std::size_t>(diag.winner)];
  result.hyper = win.end;
  result.sigma2 = win.sigma2;
  result.objective = win.objective;
  result.g = map_estimate(result.hyper, result.sigma2, pre);
  if (diag.evaluations > 0)
    diag.seconds_per_evaluation =
        std::chrono::duration<double>(total_time).count() / static_cast<double>(diag.evaluations);
  try {
    diag.gradient_norm = nll_gradient_hessian(result.hyper, result.sigma2, pre, false).gradient.norm();
  } catch (const Error&) {
    diag.gradient_norm = std::numeric_limits<double>::quiet_NaN();
  }

  const double fractions[] = {box_fraction(result.hyper.c, cfg.c_bounds, true),
                              box_fraction(result.hyper.lambda, cfg.lambda_bounds, false),
                              box_fraction(result.hyper.rho, cfg.rho_bounds, false)};
  const char* names[] = {"c", "lambda", "rho"};
  for (int k = 0; k < 3; ++k)
    if (std::min(fractions[k], 1.0 - fractions[k]) < kBoundaryFraction)
      diag.warnings.push_back(std::string("estimate of ") + names[k] + " is at its bound");
  return result;
}

IdentificationResult tune(const RegressionData& data, const TunerConfig& cfg) {
  cfg.validate();
  const PreprocessedData pre = preprocess(data);
  std::optional<Eigen::VectorXd> g_ls;
  double sigma2_ls = 0.0;
  try {
    LeastSquaresEstimate ls = ls_estimate(data);
    g_ls = std::move(ls.g);
    sigma2_ls = ls.sigma2;
  } catch (const Error& e) {
    if (cfg.sigma2_policy.kind != Sigma2Policy::Kind::fixed)
      throw TuningError(std::string("least-squares noise estimate unavailable: ") + e.what());
  }
  if (cfg.sigma2_policy.kind != Sigma2Policy::Kind::fixed && !(sigma2_ls > 0.0))
    throw TuningError("least-squares residual variance is zero; supply a fixed noise variance");
  return tune(pre, sigma2_ls, g_ls, cfg);
}

double fit_metric(const Eigen::VectorXd& g_hat, const Eigen::VectorXd& g_true) {
  if (g_hat.size() != g_true.size())
    throw DomainError("fit_metric needs vectors of equal length");
  if (g_true.size() == 0) throw DomainError("fit_metric needs non-empty vectors");
  const double spread = (g_true.array() - g_true.mean()).matrix().norm();
  if (!(spread > 0.0)) throw DomainError("fit is undefined for a constant reference");
  const double fit = 100.0 * (1.0 - (g_hat - g_true).norm() / spread);
  return std::max(fit, kFitFloor);
}

}  // namespace dcsysid
