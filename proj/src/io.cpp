#include "dcsysid/io.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace dcsysid::io {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool parse_number(std::string_view text, double& out) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  if (text.empty()) return false;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && end == text.data() + text.size();
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

// Whitespace/comma separated numbers of one line; '#' starts a comment.
std::vector<double> numbers_on_line(std::string_view line, std::size_t line_no) {
  line = line.substr(0, line.find('#'));
  std::vector<double> values;
  std::size_t k = 0;
  while (k < line.size()) {
    while (k < line.size() && (std::isspace(static_cast<unsigned char>(line[k])) || line[k] == ','))
      ++k;
    const std::size_t start = k;
    while (k < line.size() && !std::isspace(static_cast<unsigned char>(line[k])) && line[k] != ',')
      ++k;
    if (k == start) break;
    double v = 0.0;
    const std::string_view token = line.substr(start, k - start);
    if (!parse_number(token, v)) throw ParseError(line_no, "not a number: '" + std::string(token) + "'");
    values.push_back(v);
  }
  return values;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return in;
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size()));
}

Interval interval_from_json(const nlohmann::json& j, const char* name) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw ParseError(0, std::string("bounds.") + name + " must be a [lo, hi] pair of numbers");
  return {j[0].get<double>(), j[1].get<double>()};
}

template <class T>
T number_field(const nlohmann::json& j, const char* key) {
  if (!j.is_number()) throw ParseError(0, std::string("config key '") + key + "' must be a number");
  if constexpr (std::is_integral_v<T>) {
    if (!j.is_number_integer()) throw ParseError(0, std::string("config key '") + key + "' must be an integer");
  }
  return j.get<T>();
}

}  // namespace

Series parse_data_csv(std::istream& in) {
  std::vector<double> u;
  std::vector<double> y;
  std::string line;
  std::size_t line_no = 0;
  bool seen_row = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view text = trim(line);
    if (text.empty()) continue;
    const auto fields = split(text, ',');
    if (fields.size() != 2)
      throw ParseError(line_no, "expected 2 comma-separated columns u,y, found " +
                                    std::to_string(fields.size()));
    double a = 0.0;
    double b = 0.0;
    const bool numeric = parse_number(fields[0], a) && parse_number(fields[1], b);
    if (!numeric) {
      if (!seen_row && !parse_number(fields[0], a) && !parse_number(fields[1], b)) {
        seen_row = true;  // header row
        continue;
      }
      throw ParseError(line_no, "malformed row '" + std::string(text) + "'");
    }
    seen_row = true;
    u.push_back(a);
    y.push_back(b);
  }
  if (u.empty()) throw ParseError(line_no, "no data rows");
  return {to_vector(u), to_vector(y)};
}

Series read_data_csv(const std::string& path) {
  std::ifstream in = open_input(path);
  return parse_data_csv(in);
}

void write_data_csv(std::ostream& out, const Eigen::VectorXd& u, const Eigen::VectorXd& y) {
  if (u.size() != y.size()) throw DomainError("u and y lengths differ");
  out << "u,y\n";
  for (Index t = 0; t < u.size(); ++t) out << format_double(u(t)) << ',' << format_double(y(t)) << '\n';
}

PartialBandMatrix parse_band(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::pair<std::size_t, std::vector<double>>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    std::vector<double> values = numbers_on_line(line, line_no);
    if (!values.empty()) rows.emplace_back(line_no, std::move(values));
  }
  if (rows.empty()) throw ParseError(line_no, "band file is empty");

  const auto& [header_line, header] = rows.front();
  if (header.size() != 2 || header[0] != std::floor(header[0]) || header[1] != std::floor(header[1]) ||
      header[0] < 1 || header[1] < 0)
    throw ParseError(header_line, "header must be two integers 'n m' with n >= 1, m >= 0");
  const auto n = static_cast<Index>(header[0]);
  const auto m = static_cast<Index>(header[1]);
  if (m > n - 1) throw ParseError(header_line, "bandwidth m must be <= n - 1");
  if (static_cast<Index>(rows.size()) - 1 != m + 1)
    throw ParseError(rows.back().first, "expected " + std::to_string(m + 1) + " diagonal lines, found " +
                                            std::to_string(rows.size() - 1));

  std::vector<Eigen::VectorXd> diagonals;
  for (Index d = 0; d <= m; ++d) {
    const auto& [row_line, values] = rows[static_cast<std::size_t>(d + 1)];
    if (static_cast<Index>(values.size()) != n - d)
      throw ParseError(row_line, "diagonal " + std::to_string(d) + " needs " + std::to_string(n - d) +
                                     " values, found " + std::to_string(values.size()));
    diagonals.push_back(to_vector(values));
  }
  return PartialBandMatrix(n, m, std::move(diagonals));
}

PartialBandMatrix read_band_file(const std::string& path) {
  std::ifstream in = open_input(path);
  return parse_band(in);
}

void write_band(std::ostream& out, const PartialBandMatrix& p) {
  out << p.n() << ' ' << p.m() << '\n';
  for (Index d = 0; d <= p.m(); ++d) {
    const Eigen::VectorXd& diag = p.diagonal(d);
    for (Index k = 0; k < diag.size(); ++k) out << (k ? " " : "") << format_double(diag(k));
    out << '\n';
  }
}

Eigen::VectorXd parse_vector(std::istream& in) {
  std::vector<double> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::vector<double> row = numbers_on_line(line, line_no);
    values.insert(values.end(), row.begin(), row.end());
  }
  if (values.empty()) throw ParseError(line_no, "vector file holds no numbers");
  return to_vector(values);
}

Eigen::VectorXd read_vector_file(const std::string& path) {
  std::ifstream in = open_input(path);
  return parse_vector(in);
}

void write_vector(std::ostream& out, const Eigen::VectorXd& v) {
  for (Index k = 0; k < v.size(); ++k) out << format_double(v(k)) << '\n';
}

TunerConfig tuner_config_from_json(const nlohmann::json& j, TunerConfig cfg) {
  if (!j.is_object()) throw ParseError(0, "tuner config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "solver") {
      const std::string s = value.is_string() ? value.get<std::string>() : "";
      if (s == "derivative-free")
        cfg.solver = SolverKind::derivative_free;
      else if (s == "gradient-assisted")
        cfg.solver = SolverKind::gradient_assisted;
      else
        throw ParseError(0, "solver must be \"derivative-free\" or \"gradient-assisted\"");
    } else if (key == "bounds") {
      if (!value.is_object()) throw ParseError(0, "bounds must be an object");
      for (const auto& [name, box] : value.items()) {
        if (name == "c")
          cfg.c_bounds = interval_from_json(box, "c");
        else if (name == "lambda")
          cfg.lambda_bounds = interval_from_json(box, "lambda");
        else if (name == "rho")
          cfg.rho_bounds = interval_from_json(box, "rho");
        else
          throw ParseError(0, "unknown bounds key '" + name + "'");
      }
    } else if (key == "restarts") {
      cfg.restarts = number_field<int>(value, "restarts");
    } else if (key == "tol_obj") {
      cfg.tol_obj = number_field<double>(value, "tol_obj");
    } else if (key == "tol_x") {
      cfg.tol_x = number_field<double>(value, "tol_x");
    } else if (key == "max_evals") {
      cfg.max_evals = number_field<int>(value, "max_evals");
    } else if (key == "seed") {
      if (!value.is_number_unsigned()) throw ParseError(0, "seed must be a non-negative integer");
      cfg.seed = value.get<std::uint64_t>();
    } else if (key == "sigma2_policy") {
      if (value == "ls-residual")
        cfg.sigma2_policy = Sigma2Policy::ls_residual();
      else if (value == "joint")
        cfg.sigma2_policy = Sigma2Policy::joint();
      else if (value.is_object() && value.size() == 1 && value.contains("fixed"))
        cfg.sigma2_policy = Sigma2Policy::fixed(number_field<double>(value["fixed"], "sigma2_policy.fixed"));
      else
        throw ParseError(0, "sigma2_policy must be \"ls-residual\", \"joint\" or {\"fixed\": value}");
    } else if (key == "initial_points") {
      if (!value.is_array()) throw ParseError(0, "initial_points must be an array");
      cfg.initial_points.clear();
      for (const auto& p : value) {
        if (!p.is_array() || p.size() != 3 || !p[0].is_number() || !p[1].is_number() || !p[2].is_number())
          throw ParseError(0, "each initial point must be [c, lambda, rho]");
        cfg.initial_points.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
      }
    } else {
      throw ParseError(0, "unknown tuner config key '" + key + "'");
    }
  }
  return cfg;
}

TunerConfig read_tuner_config(const std::string& path, TunerConfig base) {
  const std::string text = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(0, path + ": " + e.what());
  }
  try {
    return tuner_config_from_json(j, std::move(base));
  } catch (const ParseError& e) {
    throw ParseError(0, path + ": " + e.what());
  }
}

nlohmann::json to_json(const TunerConfig& cfg) {
  nlohmann::json j;
  j["solver"] = cfg.solver == SolverKind::derivative_free ? "derivative-free" : "gradient-assisted";
  j["bounds"] = {{"c", {cfg.c_bounds.lo, cfg.c_bounds.hi}},
                 {"lambda", {cfg.lambda_bounds.lo, cfg.lambda_bounds.hi}},
                 {"rho", {cfg.rho_bounds.lo, cfg.rho_bounds.hi}}};
  j["restarts"] = cfg.restarts;
  j["tol_obj"] = cfg.tol_obj;
  j["tol_x"] = cfg.tol_x;
  j["max_evals"] = cfg.max_evals;
  switch (cfg.sigma2_policy.kind) {
    case Sigma2Policy::Kind::ls_residual: j["sigma2_policy"] = "ls-residual"; break;
    case Sigma2Policy::Kind::joint: j["sigma2_policy"] = "joint"; break;
    case Sigma2Policy::Kind::fixed: j["sigma2_policy"] = {{"fixed", cfg.sigma2_policy.value}}; break;
  }
  j["seed"] = cfg.seed;
  j["initial_points"] = nlohmann::json::array();
  for (const DcHyperparams& p : cfg.initial_points) j["initial_points"].push_back({p.c, p.lambda, p.rho});
  return j;
}

std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw NumericalError("cannot format number");
  return {buf.data(), end};
}

std::string read_file(const std::string& path) {
  std::ifstream in = open_input(path);
  std::ostringstream os;
  os << in.rdbuf();
  if (in.bad()) throw IoError("error while reading '" + path + "'");
  return os.str();
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char ch : bytes) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  std::array<char, 17> buf{};
  for (int k = 15; k >= 0; --k, h >>= 4) buf[static_cast<std::size_t>(k)] = "0123456789abcdef"[h & 0xf];
  return {buf.data(), 16};
}

nlohmann::json to_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

nlohmann::json to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    const Eigen::VectorXd row = m.row(i).transpose();
    rows.push_back(to_json(row));
  }
  return rows;
}

}  // namespace dcsysid::io
