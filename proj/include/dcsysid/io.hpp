#pragma once

// Text formats used by the command-line tool.
//
//   data CSV     two columns u,y; optional header row; one row per sample
//   band file    first line "n m", then m+1 lines holding diagonals 0..m
//   vector file  numbers separated by whitespace or commas; '#' comments
//   tuner JSON   object mirroring TunerConfig, every key optional:
//     { "solver": "derivative-free" | "gradient-assisted",
//       "bounds": { "c": [lo, hi], "lambda": [lo, hi], "rho": [lo, hi] },
//       "restarts": 5, "tol_obj": 1e-8, "tol_x": 1e-6, "max_evals": 2000,
//       "sigma2_policy": "ls-residual" | "joint" | { "fixed": 0.5 },
//       "seed": 0, "initial_points": [[c, lambda, rho], ...] }

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "dcsysid/maxent.hpp"
#include "dcsysid/tuner.hpp"

namespace dcsysid::io {

struct Series {
  Eigen::VectorXd u;
  Eigen::VectorXd y;
};

Series parse_data_csv(std::istream& in);
Series read_data_csv(const std::string& path);
void write_data_csv(std::ostream& out, const Eigen::VectorXd& u, const Eigen::VectorXd& y);

PartialBandMatrix parse_band(std::istream& in);
PartialBandMatrix read_band_file(const std::string& path);
void write_band(std::ostream& out, const PartialBandMatrix& p);

Eigen::VectorXd parse_vector(std::istream& in);
Eigen::VectorXd read_vector_file(const std::string& path);
void write_vector(std::ostream& out, const Eigen::VectorXd& v);

TunerConfig tuner_config_from_json(const nlohmann::json& j, TunerConfig base = {});
TunerConfig read_tuner_config(const std::string& path, TunerConfig base = {});
nlohmann::json to_json(const TunerConfig& cfg);

/// Shortest decimal that round-trips to the same double.
std::string format_double(double v);

/// Whole file as bytes; throws IoError.
std::string read_file(const std::string& path);

/// 64-bit FNV-1a of the bytes, as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);

nlohmann::json to_json(const Eigen::VectorXd& v);
nlohmann::json to_json(const Eigen::MatrixXd& m);

}  // namespace dcsysid::io
