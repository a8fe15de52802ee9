#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include "dcsysid/io.hpp"

using namespace dcsysid;
using nlohmann::json;

namespace {

std::size_t parse_error_line(auto&& fn) {
  try {
    fn();
  } catch (const ParseError& e) {
    return e.line();
  }
  return static_cast<std::size_t>(-1);
}

}  // namespace

TEST(DataCsv, WithAndWithoutHeader) {
  std::istringstream with("u,y\n1,2\n3,4.5\n");
  const io::Series a = io::parse_data_csv(with);
  EXPECT_EQ(a.u, Eigen::Vector2d(1, 3));
  EXPECT_EQ(a.y, Eigen::Vector2d(2, 4.5));
  std::istringstream without("1, 2\r\n\n-3e-1,4\n");
  const io::Series b = io::parse_data_csv(without);
  EXPECT_EQ(b.u, Eigen::Vector2d(1, -0.3));
  EXPECT_EQ(b.y, Eigen::Vector2d(2, 4));
}

TEST(DataCsv, ErrorsCarryLineNumbers) {
  EXPECT_EQ(parse_error_line([] {
              std::istringstream in("u,y\n1,2\n3,x\n");
              io::parse_data_csv(in);
            }),
            3u);
  EXPECT_EQ(parse_error_line([] {
              std::istringstream in("1,2\n3\n");
              io::parse_data_csv(in);
            }),
            2u);
  EXPECT_EQ(parse_error_line([] {
              std::istringstream in("1,2,3\n");
              io::parse_data_csv(in);
            }),
            1u);
  EXPECT_THROW(
      [] {
        std::istringstream in("u,y\n");
        io::parse_data_csv(in);
      }(),
      ParseError);
  try {
    std::istringstream in("1,2\n1,nan-ish\n");
    io::parse_data_csv(in);
  } catch (const ParseError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("line 2: ", 0), 0u) << e.what();
  }
}

TEST(DataCsv, RoundTripIsExact) {
  const Eigen::Vector3d u(0.1, -1.0 / 3.0, 1e-300);
  const Eigen::Vector3d y(std::numeric_limits<double>::max(), 2.0, -0.0);
  std::stringstream buf;
  io::write_data_csv(buf, u, y);
  EXPECT_EQ(buf.str().substr(0, 4), "u,y\n");
  const io::Series s = io::parse_data_csv(buf);
  EXPECT_EQ(s.u, u);
  EXPECT_EQ(s.y, y);
}

TEST(DataCsv, MissingFileIsIoError) {
  EXPECT_THROW(io::read_data_csv("/nonexistent/data.csv"), IoError);
}

TEST(BandFile, ParseAndRoundTrip) {
  std::istringstream in("# band\n3 1\n1 2 3\n0.5 0.25\n");
  const PartialBandMatrix p = io::parse_band(in);
  EXPECT_EQ(p.n(), 3);
  EXPECT_EQ(p.m(), 1);
  EXPECT_EQ(p.at(2, 2), 3.0);
  EXPECT_EQ(p.at(2, 1), 0.25);
  EXPECT_FALSE(p.specified(0, 2));
  std::stringstream buf;
  io::write_band(buf, p);
  const PartialBandMatrix q = io::parse_band(buf);
  EXPECT_EQ(q.diagonal(0), p.diagonal(0));
  EXPECT_EQ(q.diagonal(1), p.diagonal(1));
}

TEST(BandFile, Errors) {
  auto line_of = [](const char* text) {
    return parse_error_line([&] {
      std::istringstream in(text);
      io::parse_band(in);
    });
  };
  EXPECT_EQ(line_of("3\n1 2 3\n"), 1u);
  EXPECT_EQ(line_of("3 3\n1 2 3\n1 1\n1\n0\n"), 1u);
  EXPECT_EQ(line_of("3 1\n1 2 3\n0.5\n"), 3u);
  EXPECT_EQ(line_of("3 1\n1 2 3\n"), 2u);
  EXPECT_EQ(line_of("3 0\n1 two 3\n"), 2u);
  EXPECT_THROW(
      [] {
        std::istringstream in("");
        io::parse_band(in);
      }(),
      ParseError);
}

TEST(VectorFile, SeparatorsAndComments) {
  std::istringstream in("# response\n1, 2 3\n\t-4.5e0 # trailing\n");
  EXPECT_EQ(io::parse_vector(in), Eigen::Vector4d(1, 2, 3, -4.5));
  std::istringstream empty("# nothing\n");
  EXPECT_THROW(io::parse_vector(empty), ParseError);
  std::istringstream bad("1 2\n3 q\n");
  EXPECT_EQ(parse_error_line([&] { io::parse_vector(bad); }), 2u);
  std::stringstream buf;
  const Eigen::Vector3d v(1.0 / 7.0, -2.0, 1e-17);
  io::write_vector(buf, v);
  EXPECT_EQ(io::parse_vector(buf), v);
}

TEST(TunerJson, AllKeys) {
  const json j = json::parse(R"({
    "solver": "gradient-assisted",
    "bounds": {"c": [0.01, 100], "lambda": [0.5, 0.99], "rho": [-0.5, 0.95]},
    "restarts": 3, "tol_obj": 1e-9, "tol_x": 1e-7, "max_evals": 50,
    "sigma2_policy": {"fixed": 0.5}, "seed": 42,
    "initial_points": [[1, 0.9, 0.8], [2, 0.7, 0.1]]
  })");
  const TunerConfig cfg = io::tuner_config_from_json(j);
  EXPECT_EQ(cfg.solver, SolverKind::gradient_assisted);
  EXPECT_EQ(cfg.c_bounds.lo, 0.01);
  EXPECT_EQ(cfg.lambda_bounds.hi, 0.99);
  EXPECT_EQ(cfg.rho_bounds.lo, -0.5);
  EXPECT_EQ(cfg.restarts, 3);
  EXPECT_EQ(cfg.tol_obj, 1e-9);
  EXPECT_EQ(cfg.tol_x, 1e-7);
  EXPECT_EQ(cfg.max_evals, 50);
  EXPECT_EQ(cfg.sigma2_policy.kind, Sigma2Policy::Kind::fixed);
  EXPECT_EQ(cfg.sigma2_policy.value, 0.5);
  EXPECT_EQ(cfg.seed, 42u);
  ASSERT_EQ(cfg.initial_points.size(), 2u);
  EXPECT_EQ(cfg.initial_points[1].lambda, 0.7);

  const TunerConfig back = io::tuner_config_from_json(io::to_json(cfg));
  EXPECT_EQ(io::to_json(back), io::to_json(cfg));
}

TEST(TunerJson, PartialOverridesBase) {
  TunerConfig base;
  base.restarts = 9;
  const TunerConfig cfg = io::tuner_config_from_json(json::parse(R"({"sigma2_policy": "joint"})"), base);
  EXPECT_EQ(cfg.restarts, 9);
  EXPECT_EQ(cfg.sigma2_policy.kind, Sigma2Policy::Kind::joint);
  EXPECT_EQ(io::tuner_config_from_json(json::object()).restarts, TunerConfig{}.restarts);
}

TEST(TunerJson, RejectsUnknownOrMistypedKeys) {
  for (const char* text : {R"({"restart": 3})", R"({"bounds": {"sigma": [1, 2]}})", R"({"restarts": 2.5})",
                           R"({"solver": "newton"})", R"({"seed": -1})", R"({"sigma2_policy": "mle"})",
                           R"({"initial_points": [[1, 0.9]]})", R"({"bounds": {"c": [1]}})", R"([1, 2])"})
    EXPECT_THROW(io::tuner_config_from_json(json::parse(text)), ParseError) << text;
}

TEST(TunerJson, ReadFromFile) {
  const std::string path = testing::TempDir() + "dcsysid_cfg.json";
  {
    std::ofstream out(path);
    out << R"({"restarts": 2})";
  }
  EXPECT_EQ(io::read_tuner_config(path).restarts, 2);
  {
    std::ofstream out(path);
    out << "{not json";
  }
  EXPECT_THROW(io::read_tuner_config(path), ParseError);
  std::remove(path.c_str());
  EXPECT_THROW(io::read_tuner_config(path), IoError);
}

TEST(Formatting, ShortestRoundTrip) {
  EXPECT_EQ(io::format_double(0.1), "0.1");
  EXPECT_EQ(io::format_double(1.0), "1");
  for (double v : {1.0 / 3.0, 2.0 / 7.0 * 1e-200, 6.02214076e23, -0.0, 5e-324}) {
    const std::string s = io::format_double(v);
    EXPECT_EQ(std::strtod(s.c_str(), nullptr), v) << s;
  }
}

TEST(Digest, Fnv1aReferenceValues) {
  EXPECT_EQ(io::fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(io::fnv1a_hex("a"), "af63dc4c8601ec8c");
  EXPECT_EQ(io::fnv1a_hex("foobar"), "85944171f73967e8");
}

TEST(JsonConversion, VectorsAndMatrices) {
  EXPECT_EQ(io::to_json(Eigen::VectorXd(Eigen::Vector2d(1, 2))), json::parse("[1.0, 2.0]"));
  Eigen::MatrixXd m(2, 2);
  m << 1, 2, 3, 4;
  EXPECT_EQ(io::to_json(m), json::parse("[[1.0, 2.0], [3.0, 4.0]]"));
}
