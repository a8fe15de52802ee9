#pragma once

// The subcommands behind the dcsysid executable. Each returns a JSON run
// report:
//
//   { "tool", "version", "command", "threads",
//     "input":  digest of what was read (bytes hash, N, n, sigma2 estimate),
//     "seeds":  every seed that influenced the result,
//     "result": command-specific payload,
//     "timing": seconds per stage }
//
// "command" is filled in by the caller with the argv that produced the run.

#include <cstdint>
#include <exception>
#include <optional>
#include <string>

#include <json.hpp>

#include "dcsysid/kernel.hpp"
#include "dcsysid/likelihood.hpp"
#include "dcsysid/tuner.hpp"

namespace dcsysid::cli {

enum ExitCode : int {
  kOk = 0,
  kGenericFailure = 1,
  kUsage = 2,
  kParseFailure = 3,
  kFeasibilityFailure = 4,
  kNumericalFailure = 5,
  kTuningFailure = 6,
  kDomainFailure = 7,
  kIoFailure = 8,
};

int exit_code_for(const std::exception& e);
/// Short label for the error class ("parse", "tuning", ...).
std::string error_kind(const std::exception& e);

enum class OutputFormat { json, csv };

struct IdentifyOptions {
  std::string csv_path;
  Index n = 0;
  std::optional<std::string> config_path;
  /// Flag overrides, applied on top of the config file.
  std::optional<double> sigma2;  // fixed noise variance
  bool joint_sigma2 = false;
  std::optional<std::uint64_t> seed;
  std::optional<SolverKind> solver;
  std::optional<int> restarts;
  std::optional<int> max_evals;
  std::optional<double> tol_obj;
  std::optional<double> tol_x;
  std::optional<Interval> c_bounds;
  std::optional<Interval> lambda_bounds;
  std::optional<Interval> rho_bounds;
  std::optional<std::string> g_true_path;
  std::optional<std::string> out_path;
  OutputFormat format = OutputFormat::json;
};

/// The TunerConfig an identify run will use: defaults, then the config
/// file, then flags.
TunerConfig effective_config(const IdentifyOptions& opt);

nlohmann::json cmd_identify(const IdentifyOptions& opt);

struct KernelInfoOptions {
  DcHyperparams hyper;
  Index n = 0;
  std::optional<std::string> out_path;
  OutputFormat format = OutputFormat::json;
};

nlohmann::json cmd_kernel_info(const KernelInfoOptions& opt);

struct CompleteOptions {
  std::string band_path;
  std::optional<std::string> out_path;
  OutputFormat format = OutputFormat::json;
};

nlohmann::json cmd_complete(const CompleteOptions& opt);

struct BenchOptions {
  Index n = 125;
  Index samples = 500;
  int evals = 5000;
  std::uint64_t seed = 0;
  DcHyperparams hyper{1.0, 0.9, 0.8};
  double sigma2 = 0.2;
  std::optional<std::string> out_path;
  OutputFormat format = OutputFormat::json;
};

struct AlgorithmTiming {
  std::string name;
  double seconds = 0.0;
  int failures = 0;
  /// Objective from the first evaluation; NaN if it failed.
  double objective = 0.0;
  FlopTally flops;
};

struct BenchResult {
  AlgorithmTiming a;
  AlgorithmTiming b;
  AlgorithmTiming c;
  double preprocessing_flops = 0.0;
  double preprocessing_seconds = 0.0;
  /// Largest |x - y| / max(|x|, |y|) over the three objectives; NaN when
  /// any algorithm failed.
  double max_discrepancy = 0.0;
};

/// Seeded Phi^T (N x n) and Y with i.i.d. standard normal entries; runs the
/// three evaluation loops one after the other. Preprocessing is timed
/// separately and excluded from the per-algorithm times.
BenchResult run_benchmark(const BenchOptions& opt);

nlohmann::json cmd_bench(const BenchOptions& opt);

enum class InputKind { white, impulse };

struct SimulateOptions {
  /// "dc-draw(c,lambda,rho,n,seed)" or the path of a vector file.
  std::string g_spec;
  Index samples = 0;
  double sigma2 = 0.0;
  std::uint64_t seed = 0;
  InputKind input = InputKind::white;
  std::string out_csv;
  /// Defaults to out_csv + ".g_true".
  std::optional<std::string> g_out;
};

struct DcDraw {
  DcHyperparams hyper;
  Index n = 0;
  std::uint64_t seed = 0;
};

/// Parses "dc-draw(c,lambda,rho,n,seed)"; nullopt if spec has another form.
std::optional<DcDraw> parse_dc_draw(const std::string& spec);

/// Noise seed used by simulate for input seed s.
std::uint64_t noise_seed(std::uint64_t seed);

nlohmann::json cmd_simulate(const SimulateOptions& opt);

}  // namespace dcsysid::cli
