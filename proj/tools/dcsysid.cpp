// dcsysid: FIR system identification with DC kernels.
//
//   dcsysid identify data.csv -n 60 [--config tuner.json] [--sigma2 v] [--seed s]
//   dcsysid kernel-info --c 1 --lambda 0.9 --rho 0.98 -n 125
//   dcsysid complete band.txt
//   dcsysid bench -n 125 --samples 500 --evals 5000 --seed 0
//   dcsysid simulate --g "dc-draw(1,0.85,0.7,50,7)" --samples 500 --sigma2 0.1 --seed 1 --out data.csv
//
// The JSON run report goes to stdout; --out writes it (or, with --format csv,
// a flat table for plotting) to a file as well.

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dcsysid/commands.hpp"
#include "dcsysid/errors.hpp"

namespace {

using namespace dcsysid;

const std::map<std::string, cli::OutputFormat> kFormats{{"json", cli::OutputFormat::json},
                                                        {"csv", cli::OutputFormat::csv}};

void add_output(CLI::App* sub, std::optional<std::string>& out, cli::OutputFormat& format) {
  sub->add_option("--out", out, "Also write the report (or CSV table) to this path");
  sub->add_option("--format", format, "Format of the --out file")
      ->transform(CLI::CheckedTransformer(kFormats, CLI::ignore_case));
}

std::optional<Interval> to_interval(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  return Interval{v[0], v[1]};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FIR system identification with diagonal/correlated kernels"};
  app.set_version_flag("--version", std::string(DCSYSID_VERSION));
  app.require_subcommand(1);

  cli::IdentifyOptions identify;
  std::vector<double> c_box, lambda_box, rho_box;
  std::string solver;
  auto* id = app.add_subcommand("identify", "Tune (c, lambda, rho) and report the MAP impulse response");
  id->add_option("csv", identify.csv_path, "Data file with columns u,y")->required()->check(CLI::ExistingFile);
  id->add_option("-n,--order", identify.n, "FIR order")->required()->check(CLI::PositiveNumber);
  id->add_option("--config", identify.config_path, "Tuner configuration (JSON)");
  id->add_option("--sigma2", identify.sigma2, "Fixed noise variance (default: least-squares residual)")
      ->check(CLI::PositiveNumber);
  id->add_flag("--joint-sigma2", identify.joint_sigma2, "Tune the noise variance with the kernel");
  id->add_option("--seed", identify.seed, "Seed of the start-point design");
  id->add_option("--solver", solver, "derivative-free | gradient-assisted")
      ->check(CLI::IsMember({"derivative-free", "gradient-assisted"}));
  id->add_option("--restarts", identify.restarts, "Number of starts");
  id->add_option("--max-evals", identify.max_evals, "Objective evaluations per start");
  id->add_option("--tol-obj", identify.tol_obj, "Relative objective tolerance");
  id->add_option("--tol-x", identify.tol_x, "Parameter tolerance");
  id->add_option("--c-bounds", c_box, "Box for c")->expected(2);
  id->add_option("--lambda-bounds", lambda_box, "Box for lambda")->expected(2);
  id->add_option("--rho-bounds", rho_box, "Box for rho")->expected(2);
  id->add_option("--g-true", identify.g_true_path, "True impulse response, for fit scoring");
  add_output(id, identify.out_path, identify.format);

  cli::KernelInfoOptions info;
  auto* ki = app.add_subcommand("kernel-info", "Closed-form facts about one DC kernel");
  ki->add_option("--c", info.hyper.c, "Scale")->required();
  ki->add_option("--lambda", info.hyper.lambda, "Decay")->required();
  ki->add_option("--rho", info.hyper.rho, "Correlation")->required();
  ki->add_option("-n,--order", info.n, "Kernel order")->required()->check(CLI::PositiveNumber);
  add_output(ki, info.out_path, info.format);

  cli::CompleteOptions complete;
  auto* co = app.add_subcommand("complete", "Maximum-entropy completion of a band file");
  co->add_option("band", complete.band_path, "Band file: 'n m' then diagonals 0..m")
      ->required()
      ->check(CLI::ExistingFile);
  add_output(co, complete.out_path, complete.format);

  cli::BenchOptions bench;
  auto* be = app.add_subcommand("bench", "Time the three objective evaluators on random data");
  be->add_option("-n,--order", bench.n, "FIR order");
  be->add_option("-N,--samples", bench.samples, "Number of samples");
  be->add_option("--evals", bench.evals, "Evaluations per algorithm");
  be->add_option("--seed", bench.seed, "Data seed");
  be->add_option("--sigma2", bench.sigma2, "Noise variance");
  be->add_option("--c", bench.hyper.c, "Scale");
  be->add_option("--lambda", bench.hyper.lambda, "Decay");
  be->add_option("--rho", bench.hyper.rho, "Correlation");
  add_output(be, bench.out_path, bench.format);

  cli::SimulateOptions simulate;
  std::string input_kind = "white";
  auto* si = app.add_subcommand("simulate", "Generate u,y data from a known impulse response");
  si->add_option("--g", simulate.g_spec, "dc-draw(c,lambda,rho,n,seed) or a vector file")->required();
  si->add_option("-N,--samples", simulate.samples, "Number of samples")->required();
  si->add_option("--sigma2", simulate.sigma2, "Noise variance")->required();
  si->add_option("--seed", simulate.seed, "Seed of input and noise");
  si->add_option("--input", input_kind, "white | impulse")->check(CLI::IsMember({"white", "impulse"}));
  si->add_option("--out", simulate.out_csv, "Data CSV to write")->required();
  si->add_option("--g-out", simulate.g_out, "Where to write g_true (default: <out>.g_true)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::kUsage;
  }

  nlohmann::json command = nlohmann::json::array();
  for (int k = 0; k < argc; ++k) command.push_back(argv[k]);

  try {
    nlohmann::json report;
    if (*id) {
      if (!solver.empty())
        identify.solver = solver == "derivative-free" ? SolverKind::derivative_free : SolverKind::gradient_assisted;
      identify.c_bounds = to_interval(c_box);
      identify.lambda_bounds = to_interval(lambda_box);
      identify.rho_bounds = to_interval(rho_box);
      report = cli::cmd_identify(identify);
    } else if (*ki) {
      report = cli::cmd_kernel_info(info);
    } else if (*co) {
      report = cli::cmd_complete(complete);
    } else if (*be) {
      report = cli::cmd_bench(bench);
    } else if (*si) {
      simulate.input = input_kind == "impulse" ? cli::InputKind::impulse : cli::InputKind::white;
      report = cli::cmd_simulate(simulate);
    }
    report["command"] = command;
    std::cout << report.dump(2) << '\n';
    return cli::kOk;
  } catch (const std::exception& e) {
    std::cerr << "dcsysid: " << cli::error_kind(e) << " error: " << e.what() << '\n';
    return cli::exit_code_for(e);
  }
}
