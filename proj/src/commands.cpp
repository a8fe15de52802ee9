#include "dcsysid/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "dcsysid/errors.hpp"
#include "dcsysid/io.hpp"
#include "dcsysid/maxent.hpp"
#include "dcsysid/parallel.hpp"
#include "dcsysid/regression.hpp"
#include "dcsysid/rng.hpp"

namespace dcsysid::cli {

namespace {

using Clock = std::chrono::steady_clock;
using nlohmann::json;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

json report_skeleton() {
  json r;
  r["tool"] = "dcsysid";
  r["version"] = DCSYSID_VERSION;
  r["threads"] = parallel::thread_count();
  return r;
}

json hyper_json(const DcHyperparams& h) { return {{"c", h.c}, {"lambda", h.lambda}, {"rho", h.rho}}; }

void write_artifact(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("error while writing '" + path + "'");
}

// Writes the report itself (json) or the command's flat table (csv).
void emit(const std::optional<std::string>& path, OutputFormat format, const json& report,
          const std::string& csv) {
  if (!path) return;
  write_artifact(*path, format == OutputFormat::json ? report.dump(2) + "\n" : csv);
}

double max_relative(const Eigen::MatrixXd& approx, const Eigen::MatrixXd& exact) {
  const double scale = exact.cwiseAbs().maxCoeff();
  return scale > 0.0 ? (approx - exact).cwiseAbs().maxCoeff() / scale : (approx - exact).cwiseAbs().maxCoeff();
}

json flops_json(const FlopTally& t) {
  json stages = json::array();
  for (const auto& [name, count] : t.stages) stages.push_back({{"stage", name}, {"flops", count}});
  return {{"stages", stages}, {"total", t.total()}};
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ParseError*>(&e)) return kParseFailure;
  if (dynamic_cast<const FeasibilityError*>(&e)) return kFeasibilityFailure;
  if (dynamic_cast<const TuningError*>(&e)) return kTuningFailure;
  if (dynamic_cast<const NumericalError*>(&e)) return kNumericalFailure;
  if (dynamic_cast<const IoError*>(&e)) return kIoFailure;
  if (dynamic_cast<const DomainError*>(&e)) return kDomainFailure;
  return kGenericFailure;
}

std::string error_kind(const std::exception& e) {
  switch (exit_code_for(e)) {
    case kParseFailure: return "parse";
    case kFeasibilityFailure: return "feasibility";
    case kTuningFailure: return "tuning";
    case kNumericalFailure: return "numerical";
    case kIoFailure: return "io";
    case kDomainFailure: return "domain";
    default: return "internal";
  }
}

TunerConfig effective_config(const IdentifyOptions& opt) {
  TunerConfig cfg;
  if (opt.config_path) cfg = io::read_tuner_config(*opt.config_path, cfg);
  if (opt.sigma2 && opt.joint_sigma2) throw DomainError("--sigma2 and --joint-sigma2 are exclusive");
  if (opt.sigma2) cfg.sigma2_policy = Sigma2Policy::fixed(*opt.sigma2);
  if (opt.joint_sigma2) cfg.sigma2_policy = Sigma2Policy::joint();
  if (opt.seed) cfg.seed = *opt.seed;
  if (opt.solver) cfg.solver = *opt.solver;
  if (opt.restarts) cfg.restarts = *opt.restarts;
  if (opt.max_evals) cfg.max_evals = *opt.max_evals;
  if (opt.tol_obj) cfg.tol_obj = *opt.tol_obj;
  if (opt.tol_x) cfg.tol_x = *opt.tol_x;
  if (opt.c_bounds) cfg.c_bounds = *opt.c_bounds;
  if (opt.lambda_bounds) cfg.lambda_bounds = *opt.lambda_bounds;
  if (opt.rho_bounds) cfg.rho_bounds = *opt.rho_bounds;
  cfg.validate();
  return cfg;
}

json cmd_identify(const IdentifyOptions& opt) {
  const auto t0 = Clock::now();
  if (opt.n < 1) throw DomainError("order n must be >= 1");
  const TunerConfig cfg = effective_config(opt);
  const std::string bytes = io::read_file(opt.csv_path);
  std::istringstream in(bytes);
  io::Series series = io::parse_data_csv(in);
  const RegressionData data(std::move(series.u), std::move(series.y), opt.n);
  std::optional<Eigen::VectorXd> g_true;
  if (opt.g_true_path) {
    g_true = io::read_vector_file(*opt.g_true_path);
    if (g_true->size() != opt.n)
      throw DomainError("--g-true holds " + std::to_string(g_true->size()) + " values, expected n=" +
                        std::to_string(opt.n));
  }
  const double t_read = seconds_since(t0);

  const auto t1 = Clock::now();
  const PreprocessedData pre = preprocess(data);
  const double t_pre = seconds_since(t1);

  std::optional<LeastSquaresEstimate> ls;
  std::string ls_error;
  try {
    ls = ls_estimate(data);
  } catch (const Error& e) {
    ls_error = e.what();
  }
  const bool fixed = cfg.sigma2_policy.kind == Sigma2Policy::Kind::fixed;
  if (!fixed && !ls)
    throw TuningError("least-squares noise estimate unavailable (" + ls_error + "); pass --sigma2");
  if (!fixed && !(ls->sigma2 > 0.0))
    throw TuningError("least-squares residual variance is zero; pass --sigma2");

  const auto t2 = Clock::now();
  const IdentificationResult res =
      tune(pre, ls ? ls->sigma2 : 0.0, ls ? std::optional<Eigen::VectorXd>(ls->g) : std::nullopt, cfg);
  const double t_tune = seconds_since(t2);

  json r = report_skeleton();
  r["subcommand"] = "identify";
  r["input"] = {{"path", opt.csv_path},
                {"fnv1a64", io::fnv1a_hex(bytes)},
                {"length", data.samples()},
                {"n", data.n()},
                {"sigma2_hat", res.sigma2}};
  r["seeds"] = {{"tuner", cfg.seed}};
  r["config"] = io::to_json(cfg);

  json result;
  result["hyper"] = hyper_json(res.hyper);
  result["sigma2"] = res.sigma2;
  result["objective"] = res.objective;
  result["g_hat"] = io::to_json(res.g);
  if (ls) {
    result["least_squares"] = {{"g", io::to_json(ls->g)}, {"sigma2", ls->sigma2}};
  } else {
    result["least_squares"] = {{"error", ls_error}};
  }
  if (g_true) {
    json fit = {{"map", fit_metric(res.g, *g_true)}};
    if (ls) fit["least_squares"] = fit_metric(ls->g, *g_true);
    result["fit"] = fit;
  }
  const TuningDiagnostics& d = res.diagnostics;
  json restarts = json::array();
  for (const RestartDiagnostics& run : d.restarts) {
    json entry = {{"start", hyper_json(run.start)},
                  {"end", hyper_json(run.end)},
                  {"start_objective", run.start_objective},
                  {"objective", std::isfinite(run.objective) ? json(run.objective) : json(nullptr)},
                  {"sigma2", run.sigma2},
                  {"evaluations", run.evaluations},
                  {"converged", run.converged}};
    if (!run.failure.empty()) entry["failure"] = run.failure;
    restarts.push_back(entry);
  }
  json warnings = d.warnings;
  for (const std::string& note : data.diagnostics()) warnings.push_back(note);
  result["diagnostics"] = {{"evaluations", d.evaluations},
                           {"winner", d.winner},
                           {"gradient_norm", d.gradient_norm},
                           {"seconds_per_evaluation", d.seconds_per_evaluation},
                           {"restarts", restarts},
                           {"warnings", warnings}};
  r["result"] = result;
  r["timing"] = {{"read_s", t_read}, {"preprocess_s", t_pre}, {"tune_s", t_tune}, {"total_s", seconds_since(t0)}};

  std::ostringstream csv;
  csv << "t,g_hat" << (ls ? ",g_ls" : "") << (g_true ? ",g_true" : "") << '\n';
  for (Index k = 0; k < opt.n; ++k) {
    csv << k + 1 << ',' << io::format_double(res.g(k));
    if (ls) csv << ',' << io::format_double(ls->g(k));
    if (g_true) csv << ',' << io::format_double((*g_true)(k));
    csv << '\n';
  }
  emit(opt.out_path, opt.format, r, csv.str());
  return r;
}

json cmd_kernel_info(const KernelInfoOptions& opt) {
  const auto t0 = Clock::now();
  opt.hyper.validate_strict();
  if (opt.n < 1) throw DomainError("order n must be >= 1");
  const Index n = opt.n;
  const KernelMatrix k = build_dc_kernel(opt.hyper, n);
  const FactoredKernel f = dc_factorize(opt.hyper, n);
  const TridiagonalMatrix inv = dc_inverse(opt.hyper, n);
  const Eigen::MatrixXd k_inv = inv.dense();
  const double logdet = dc_logdet(opt.hyper, n);
  const double cond = dc_condition_number(opt.hyper, n);

  const Eigen::MatrixXd u = f.u_factor;
  const Eigen::MatrixXd uwu = u * f.w_diag.asDiagonal() * u.transpose();
  const Eigen::MatrixXd l = f.l_factor.dense();
  const Eigen::MatrixXd lvl = l * f.v_diag.asDiagonal() * l.transpose();
  const Eigen::MatrixXd dmat = f.d_cholesky.dense();
  const Eigen::MatrixXd ddt = dmat * dmat.transpose();

  json r = report_skeleton();
  r["subcommand"] = "kernel-info";
  r["input"] = {{"hyper", hyper_json(opt.hyper)}, {"n", n}};
  r["seeds"] = json::object();
  json band = {{"bandwidth", n > 1 ? 1 : 0},
               {"main_min", inv.main.minCoeff()},
               {"main_max", inv.main.maxCoeff()}};
  if (n > 1) {
    band["sub_min"] = inv.sub.minCoeff();
    band["sub_max"] = inv.sub.maxCoeff();
  }
  r["result"] = {{"logdet", logdet},
                 {"condition_number", cond},
                 {"inverse_band", band},
                 {"residuals",
                  {{"u_w_ut_vs_k", max_relative(uwu, k.entries())},
                   {"l_v_lt_vs_kinv", max_relative(lvl, k_inv)},
                   {"d_dt_vs_kinv", max_relative(ddt, k_inv)}}}};
  r["timing"] = {{"total_s", seconds_since(t0)}};

  std::ostringstream csv;
  csv << "quantity,value\n"
      << "logdet," << io::format_double(logdet) << '\n'
      << "condition_number," << io::format_double(cond) << '\n';
  for (const auto& [name, value] : r["result"]["residuals"].items())
    csv << name << ',' << io::format_double(value.get<double>()) << '\n';
  emit(opt.out_path, opt.format, r, csv.str());
  return r;
}

json cmd_complete(const CompleteOptions& opt) {
  const auto t0 = Clock::now();
  const std::string bytes = io::read_file(opt.band_path);
  std::istringstream in(bytes);
  const PartialBandMatrix band = io::parse_band(in);

  const FeasibilityReport feasible = check_feasibility(band);
  if (!feasible.feasible) {
    const Index block = *feasible.failing_block;
    throw FeasibilityError(static_cast<std::size_t>(block),
                           "band is infeasible: principal block " + std::to_string(block + 1) + " (rows " +
                               std::to_string(block + 1) + ".." + std::to_string(block + band.m() + 1) +
                               ") is not positive definite");
  }
  const CentralExtension ext = central_extension(band);

  const Eigen::MatrixXd inv = ext.completed.llt().solve(Eigen::MatrixXd::Identity(band.n(), band.n()));
  double outside = 0.0;
  for (Index j = 0; j < band.n(); ++j)
    for (Index i = 0; i < band.n(); ++i)
      if (std::abs(i - j) > band.m()) outside = std::max(outside, std::abs(inv(i, j)));
  const double inv_max = inv.cwiseAbs().maxCoeff();

  json r = report_skeleton();
  r["subcommand"] = "complete";
  r["input"] = {{"path", opt.band_path}, {"fnv1a64", io::fnv1a_hex(bytes)}, {"n", band.n()}, {"m", band.m()}};
  r["seeds"] = json::object();
  r["result"] = {{"completed", io::to_json(ext.completed)},
                 {"entropy", ext.entropy},
                 {"v_diag", io::to_json(ext.v_diag)},
                 {"out_of_band_inverse_max", outside},
                 {"out_of_band_inverse_relative", inv_max > 0.0 ? outside / inv_max : 0.0}};
  r["timing"] = {{"total_s", seconds_since(t0)}};

  std::ostringstream csv;
  for (Index i = 0; i < band.n(); ++i) {
    for (Index j = 0; j < band.n(); ++j) csv << (j ? "," : "") << io::format_double(ext.completed(i, j));
    csv << '\n';
  }
  emit(opt.out_path, opt.format, r, csv.str());
  return r;
}

BenchResult run_benchmark(const BenchOptions& opt) {
  if (opt.n < 2) throw DomainError("bench needs n >= 2");
  if (opt.samples < opt.n + 1) throw DomainError("bench needs N >= n + 1");
  if (opt.evals < 1) throw DomainError("bench needs evals >= 1");
  opt.hyper.validate_strict();
  if (!(opt.sigma2 > 0.0)) throw DomainError("noise variance must be > 0");

  Rng rng(opt.seed);
  Eigen::MatrixXd phi_t(opt.samples, opt.n);
  for (Index j = 0; j < opt.n; ++j)
    for (Index i = 0; i < opt.samples; ++i) phi_t(i, j) = rng.normal();
  Eigen::VectorXd y(opt.samples);
  for (Index i = 0; i < opt.samples; ++i) y(i) = rng.normal();

  BenchResult out;
  const auto t_pre = Clock::now();
  const PreprocessedData pre = preprocess(phi_t, y);
  out.preprocessing_seconds = seconds_since(t_pre);
  out.preprocessing_flops = flops::preprocessing(opt.n, opt.samples);

  using Fn = ObjectiveEvaluation (*)(const DcHyperparams&, double, const PreprocessedData&);
  auto time_loop = [&](const char* name, Fn fn, FlopTally tally) {
    AlgorithmTiming t;
    t.name = name;
    t.flops = std::move(tally);
    t.objective = std::numeric_limits<double>::quiet_NaN();
    double sink = 0.0;
    const auto start = Clock::now();
    for (int e = 0; e < opt.evals; ++e) {
      try {
        const double v = fn(opt.hyper, opt.sigma2, pre).value;
        if (e == 0) t.objective = v;
        sink += v;
      } catch (const NumericalError&) {
        ++t.failures;
      }
    }
    t.seconds = seconds_since(start);
    if (!std::isfinite(sink)) t.objective = std::numeric_limits<double>::quiet_NaN();
    return t;
  };
  out.a = time_loop("A", &nll_algorithm_a, flops::algorithm_a(opt.n));
  out.b = time_loop("B", &nll_algorithm_b, flops::algorithm_b(opt.n));
  out.c = time_loop("C", &nll_algorithm_c, flops::algorithm_c(opt.n));

  const double values[] = {out.a.objective, out.b.objective, out.c.objective};
  out.max_discrepancy = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j) {
      const double scale = std::max(std::abs(values[i]), std::abs(values[j]));
      const double rel = std::abs(values[i] - values[j]) / scale;
      out.max_discrepancy = std::isnan(rel) || std::isnan(out.max_discrepancy)
                                ? std::numeric_limits<double>::quiet_NaN()
                                : std::max(out.max_discrepancy, rel);
    }
  return out;
}

json cmd_bench(const BenchOptions& opt) {
  const auto t0 = Clock::now();
  const BenchResult res = run_benchmark(opt);

  json r = report_skeleton();
  r["subcommand"] = "bench";
  r["input"] = {{"length", opt.samples}, {"n", opt.n}, {"evals", opt.evals},
                {"hyper", hyper_json(opt.hyper)}, {"sigma2", opt.sigma2}};
  r["seeds"] = {{"data", opt.seed}};
  json algos = json::array();
  for (const AlgorithmTiming* t : {&res.a, &res.b, &res.c}) {
    algos.push_back({{"algorithm", t->name},
                     {"seconds", t->seconds},
                     {"seconds_per_evaluation", t->seconds / opt.evals},
                     {"failures", t->failures},
                     {"objective", std::isfinite(t->objective) ? json(t->objective) : json(nullptr)},
                     {"flops", flops_json(t->flops)}});
  }
  const double saving_time = 1.0 - res.c.seconds / res.a.seconds;
  const double saving_flops = 1.0 - res.c.flops.total() / res.a.flops.total();
  r["result"] = {{"algorithms", algos},
                 {"preprocessing", {{"seconds", res.preprocessing_seconds}, {"flops", res.preprocessing_flops}}},
                 {"max_pairwise_discrepancy",
                  std::isfinite(res.max_discrepancy) ? json(res.max_discrepancy) : json(nullptr)},
                 {"saving_c_vs_a", {{"time", saving_time}, {"flops", saving_flops}}},
                 {"ordering_c_b_a", res.c.seconds < res.b.seconds && res.b.seconds < res.a.seconds}};
  r["timing"] = {{"A_s", res.a.seconds}, {"B_s", res.b.seconds}, {"C_s", res.c.seconds},
                 {"total_s", seconds_since(t0)}};

  std::ostringstream csv;
  csv << "algorithm,seconds,failures,objective,flops\n";
  for (const AlgorithmTiming* t : {&res.a, &res.b, &res.c})
    csv << t->name << ',' << io::format_double(t->seconds) << ',' << t->failures << ','
        << io::format_double(t->objective) << ',' << io::format_double(t->flops.total()) << '\n';
  emit(opt.out_path, opt.format, r, csv.str());
  return r;
}

std::optional<DcDraw> parse_dc_draw(const std::string& spec) {
  const std::string prefix = "dc-draw(";
  if (spec.rfind(prefix, 0) != 0) return std::nullopt;
  if (spec.back() != ')') throw ParseError(0, "dc-draw spec must end with ')'");
  std::istringstream in(spec.substr(prefix.size(), spec.size() - prefix.size() - 1));
  std::vector<double> v;
  try {
    const Eigen::VectorXd parsed = io::parse_vector(in);
    v.assign(parsed.data(), parsed.data() + parsed.size());
  } catch (const ParseError& e) {
    throw ParseError(0, std::string("dc-draw: ") + e.what());
  }
  if (v.size() != 5) throw ParseError(0, "dc-draw takes 5 arguments (c, lambda, rho, n, seed)");
  if (v[3] < 1 || v[3] != std::floor(v[3])) throw ParseError(0, "dc-draw: n must be a positive integer");
  if (v[4] < 0 || v[4] != std::floor(v[4]) || v[4] >= 0x1p53)
    throw ParseError(0, "dc-draw: seed must be a non-negative integer below 2^53");
  return DcDraw{{v[0], v[1], v[2]}, static_cast<Index>(v[3]), static_cast<std::uint64_t>(v[4])};
}

std::uint64_t noise_seed(std::uint64_t seed) { return seed ^ 0x9e3779b97f4a7c15ULL; }

json cmd_simulate(const SimulateOptions& opt) {
  const auto t0 = Clock::now();
  if (opt.samples < 1) throw DomainError("number of samples must be >= 1");
  if (!(opt.sigma2 >= 0.0)) throw DomainError("noise variance must be >= 0");
  if (opt.out_csv.empty()) throw DomainError("simulate needs an output path");

  json seeds = {{"input", opt.seed}, {"noise", noise_seed(opt.seed)}};
  json g_source;
  Eigen::VectorXd g;
  if (const std::optional<DcDraw> draw = parse_dc_draw(opt.g_spec)) {
    g = sample_dc_prior(draw->hyper, draw->n, draw->seed);
    seeds["g_draw"] = draw->seed;
    g_source = {{"kind", "dc-draw"}, {"hyper", hyper_json(draw->hyper)}, {"n", draw->n}};
  } else {
    const std::string bytes = io::read_file(opt.g_spec);
    std::istringstream in(bytes);
    g = io::parse_vector(in);
    g_source = {{"kind", "file"}, {"path", opt.g_spec}, {"fnv1a64", io::fnv1a_hex(bytes)}};
  }

  Eigen::VectorXd u = Eigen::VectorXd::Zero(opt.samples);
  if (opt.input == InputKind::white) {
    Rng rng(opt.seed);
    for (Index t = 0; t < opt.samples; ++t) u(t) = rng.normal();
  } else {
    u(0) = 1.0;
  }
  const Eigen::VectorXd y = simulate_fir(g, u, opt.sigma2, noise_seed(opt.seed));
  const Eigen::VectorXd clean = simulate_fir(g, u, 0.0, 0);

  std::ostringstream data;
  io::write_data_csv(data, u, y);
  write_artifact(opt.out_csv, data.str());
  const std::string g_path = opt.g_out.value_or(opt.out_csv + ".g_true");
  std::ostringstream g_text;
  io::write_vector(g_text, g);
  write_artifact(g_path, g_text.str());

  const double signal_var = (clean.array() - clean.mean()).square().mean();
  json r = report_skeleton();
  r["subcommand"] = "simulate";
  r["input"] = {{"g", g_source}, {"length", opt.samples}, {"n", g.size()}, {"sigma2", opt.sigma2},
                {"input_kind", opt.input == InputKind::white ? "white" : "impulse"}};
  r["seeds"] = seeds;
  r["result"] = {{"data_path", opt.out_csv},
                 {"data_fnv1a64", io::fnv1a_hex(data.str())},
                 {"g_true_path", g_path},
                 {"g_true", io::to_json(g)},
                 {"snr", opt.sigma2 > 0.0 ? json(signal_var / opt.sigma2) : json(nullptr)}};
  r["timing"] = {{"total_s", seconds_since(t0)}};
  return r;
}

}  // namespace dcsysid::cli
