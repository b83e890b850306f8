#include "qrs/io.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <Eigen/Core>

#include "qrs/error.hpp"

namespace qrs {

namespace {

constexpr const char* kVersion = "0.1.0";

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, std::size_t line, const std::string& column) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw ValidationError("line " + std::to_string(line) + ", column '" + column + "': cannot parse '" + s + "'");
  }
  return v;
}

QuantileGrid quantile_grid_from(const Json& j, const QuantileGrid& fallback) {
  const double eps = j.value("epsilon", fallback.epsilon());
  if (j.contains("values")) return QuantileGrid(j.at("values").get<std::vector<double>>(), eps);
  if (j.contains("from")) {
    return QuantileGrid::uniform(j.at("from").get<double>(), j.at("to").get<double>(), j.at("step").get<double>(), eps);
  }
  return QuantileGrid(fallback.values(), eps);
}

CopulaParamGrid copula_grid_from(const Json& j) {
  if (j.contains("values")) return CopulaParamGrid(j.at("values").get<std::vector<double>>());
  return CopulaParamGrid::uniform(j.at("from").get<double>(), j.at("to").get<double>(), j.at("step").get<double>());
}

Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const Json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty()) return Eigen::MatrixXd(0, 0);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows.front().size()) throw ValidationError("ragged matrix in JSON input");
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return m;
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_std(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

RawTable parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  RawTable table;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) break;
  }
  if (trim(line).empty()) throw ValidationError("empty CSV input");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);  // UTF-8 BOM
  table.columns = split(line);
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    if (table.columns[c].empty()) throw ValidationError("empty column name in CSV header");
    for (std::size_t e = 0; e < c; ++e) {
      if (table.columns[e] == table.columns[c]) throw ValidationError("duplicate column '" + table.columns[c] + "'");
    }
  }
  table.values.resize(table.columns.size());
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(line);
    if (cells.size() != table.columns.size()) {
      throw ValidationError("line " + std::to_string(line_no) + ": expected " + std::to_string(table.columns.size()) +
                            " fields, found " + std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) table.values[c].push_back(parse_double(cells[c], line_no, table.columns[c]));
  }
  return table;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

RawTable read_csv(const std::filesystem::path& path) { return parse_csv(read_text(path)); }

Dataset load_dataset(const std::filesystem::path& path) { return validate_dataset(read_csv(path)); }

std::string dataset_to_csv(const Dataset& data) {
  std::string out = "y,d";
  for (const auto& n : data.z1_names) out += "," + n;
  for (const auto& n : data.x_names) out += "," + n;
  out += '\n';
  for (std::size_t i = 0; i < data.n(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out += format_double(data.y(r));
    out += data.d[i] == 1 ? ",1" : ",0";
    for (Eigen::Index c = 0; c < data.z1.cols(); ++c) out += "," + format_double(data.z1(r, c));
    for (Eigen::Index c = 1; c < data.x.cols(); ++c) out += "," + format_double(data.x(r, c));
    out += '\n';
  }
  return out;
}

EstimationConfig config_from_json(const Json& j) {
  EstimationConfig cfg;
  try {
    if (j.contains("fine_grid")) cfg.fine_grid = quantile_grid_from(j.at("fine_grid"), cfg.fine_grid);
    if (j.contains("coarse_grid")) cfg.coarse_grid = quantile_grid_from(j.at("coarse_grid"), cfg.coarse_grid);
    if (j.contains("copula_grid")) cfg.copula_grid = copula_grid_from(j.at("copula_grid"));
    if (j.contains("solver")) {
      const Json& s = j.at("solver");
      SolverConfig& c = cfg.solver;
      c.max_iterations = s.value("max_iterations", c.max_iterations);
      c.gap_tolerance = s.value("gap_tolerance", c.gap_tolerance);
      c.m_init_estimation = s.value("m_init_estimation", c.m_init_estimation);
      c.m_init_bootstrap = s.value("m_init_bootstrap", c.m_init_bootstrap);
      c.bad_sign_allowance = s.value("bad_sign_allowance", c.bad_sign_allowance);
      c.bad_sign_refactor_fraction = s.value("bad_sign_refactor_fraction", c.bad_sign_refactor_fraction);
      c.max_preprocess_rounds = s.value("max_preprocess_rounds", c.max_preprocess_rounds);
      c.polish = s.value("polish", c.polish);
    }
    if (j.contains("instrument")) {
      cfg.instrument.degree = j.at("instrument").value("degree", cfg.instrument.degree);
      cfg.instrument.scale = j.at("instrument").value("scale", cfg.instrument.scale);
    }
    cfg.p = j.value("p", cfg.p);
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("invalid configuration: ") + e.what());
  }
  cfg.solver.validate();
  if (cfg.instrument.degree < 0) throw ValidationError("instrument degree must be non-negative");
  return cfg;
}

Json config_to_json(const EstimationConfig& cfg) {
  const SolverConfig& s = cfg.solver;
  return Json{
      {"fine_grid", {{"values", cfg.fine_grid.values()}, {"epsilon", cfg.fine_grid.epsilon()}}},
      {"coarse_grid", {{"values", cfg.coarse_grid.values()}, {"epsilon", cfg.coarse_grid.epsilon()}}},
      {"copula_grid", {{"values", cfg.copula_grid.values()}}},
      {"solver",
       {{"max_iterations", s.max_iterations},
        {"gap_tolerance", s.gap_tolerance},
        {"m_init_estimation", s.m_init_estimation},
        {"m_init_bootstrap", s.m_init_bootstrap},
        {"bad_sign_allowance", s.bad_sign_allowance},
        {"bad_sign_refactor_fraction", s.bad_sign_refactor_fraction},
        {"max_preprocess_rounds", s.max_preprocess_rounds},
        {"polish", s.polish}}},
      {"instrument", {{"degree", cfg.instrument.degree}, {"scale", cfg.instrument.scale}}},
      {"p", cfg.p},
  };
}

EstimationConfig load_config(const std::filesystem::path& path) {
  Json j;
  try {
    j = Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw ValidationError("cannot parse config '" + path.string() + "': " + e.what());
  }
  return config_from_json(j);
}

Json fit_to_json(const QrsFit& fit) {
  Json coarse = Json::array();
  for (const auto& m : fit.coarse_betas) coarse.push_back(matrix_to_json(m));
  const QrsDiagnostics& d = fit.diagnostics;
  return Json{
      {"algorithm", fit.algorithm},
      {"theta_hat", fit.theta_hat},
      {"theta_index", fit.theta_index},
      {"theta_grid", fit.theta_grid},
      {"objective_profile", fit.objective_profile},
      {"candidates", fit.candidates},
      {"candidate_objectives", fit.candidate_objectives},
      {"fine_grid", fit.fine_grid},
      {"coarse_grid", fit.coarse_grid},
      {"epsilon", fit.epsilon},
      {"beta", matrix_to_json(fit.beta)},
      {"coarse_betas", coarse},
      {"propensity",
       {{"gamma", to_std(fit.propensity.gamma)},
        {"converged", fit.propensity.converged},
        {"log_likelihood", fit.propensity.log_likelihood},
        {"iterations", fit.propensity.iterations}}},
      {"instrument", {{"degree", fit.instrument.degree}, {"scale", fit.instrument.scale}}},
      {"data_hash", hex64(fit.data_hash)},
      {"diagnostics",
       {{"cells", d.cells},
        {"cold_cells", d.cold_cells},
        {"preprocessed_cells", d.preprocessed_cells},
        {"unconverged", d.unconverged},
        {"fallbacks", d.fallbacks},
        {"flagged", d.flagged},
        {"seconds_propensity", d.seconds_propensity},
        {"seconds_search", d.seconds_search},
        {"seconds_final", d.seconds_final},
        {"seconds_total", d.seconds_total}}},
  };
}

QrsFit fit_from_json(const Json& j) {
  QrsFit fit;
  try {
    fit.algorithm = j.at("algorithm").get<std::string>();
    fit.theta_hat = j.at("theta_hat").get<double>();
    fit.theta_index = j.at("theta_index").get<std::size_t>();
    fit.theta_grid = j.at("theta_grid").get<std::vector<double>>();
    fit.objective_profile = j.at("objective_profile").get<std::vector<double>>();
    fit.candidates = j.value("candidates", std::vector<double>{});
    fit.candidate_objectives = j.value("candidate_objectives", std::vector<double>{});
    fit.fine_grid = j.at("fine_grid").get<std::vector<double>>();
    fit.coarse_grid = j.value("coarse_grid", std::vector<double>{});
    fit.epsilon = j.at("epsilon").get<double>();
    fit.beta = matrix_from_json(j.at("beta"));
    for (const auto& m : j.value("coarse_betas", Json::array())) fit.coarse_betas.push_back(matrix_from_json(m));
    const Json& p = j.at("propensity");
    fit.propensity.gamma = from_std(p.at("gamma").get<std::vector<double>>());
    fit.propensity.converged = p.value("converged", true);
    fit.propensity.log_likelihood = p.value("log_likelihood", 0.0);
    fit.propensity.iterations = p.value("iterations", 0);
    fit.instrument.degree = j.at("instrument").value("degree", 3);
    fit.instrument.scale = j.at("instrument").value("scale", 1.0);
    fit.data_hash = std::stoull(j.at("data_hash").get<std::string>(), nullptr, 16);
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("invalid fit file: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw ValidationError("invalid fit file: bad data_hash");
  }
  return fit;
}

Json truth_to_json(const TruthRecord& truth) {
  return Json{
      {"theta_true", truth.theta_true}, {"b", truth.b},         {"g", truth.g},
      {"gamma", to_std(truth.gamma)},   {"n", truth.n},         {"k", truth.k},
      {"seed", truth.seed},             {"constants_seed", truth.constants_seed},
  };
}

Json draws_to_json(const BootstrapRun& run, bool include_betas) {
  Json draws = Json::array();
  for (const auto& d : run.draws) {
    Json e{{"index", d.index}, {"seed", d.seed}, {"valid", d.valid}};
    if (d.valid) {
      e["theta_star"] = d.theta_star;
      e["gamma_star"] = to_std(d.gamma_star);
      e["seconds"] = d.seconds;
      if (!d.candidates.empty()) e["candidates"] = d.candidates;
      if (include_betas) e["beta_star"] = matrix_to_json(d.beta_star);
    } else {
      e["error"] = d.error;
    }
    draws.push_back(e);
  }
  return draws;
}

std::string beta_csv(const std::vector<double>& tau, const Eigen::MatrixXd& beta) {
  std::string out = "tau";
  for (Eigen::Index c = 0; c < beta.cols(); ++c) out += ",beta_" + std::to_string(c);
  out += '\n';
  for (Eigen::Index r = 0; r < beta.rows(); ++r) {
    out += format_double(tau[static_cast<std::size_t>(r)]);
    for (Eigen::Index c = 0; c < beta.cols(); ++c) out += "," + format_double(beta(r, c));
    out += '\n';
  }
  return out;
}

std::string bands_csv(const Bands& bands) {
  std::string out = "tau,coef,lo,hi\n";
  for (const auto& r : bands.rows) {
    out += (std::isnan(r.tau) ? std::string() : format_double(r.tau)) + "," + r.coef + "," + format_double(r.lo) + "," +
           format_double(r.hi) + "\n";
  }
  return out;
}

std::string bench_times_csv(const ExperimentReport& report) {
  std::string out = "n,k,algorithm,reps,failed,mean_seconds\n";
  for (const auto& r : report.rows) {
    out += std::to_string(r.n) + "," + std::to_string(r.k) + "," + algorithm_name(r.algorithm) + "," +
           std::to_string(r.reps) + "," + std::to_string(r.failed) + "," + format_double(r.mean_seconds) + "\n";
  }
  return out;
}

std::string bench_mse_csv(const ExperimentReport& report) {
  std::string out = "n,k,algorithm,reps,theta_true,mean_theta,mse_theta\n";
  for (const auto& r : report.rows) {
    out += std::to_string(r.n) + "," + std::to_string(r.k) + "," + algorithm_name(r.algorithm) + "," +
           std::to_string(r.reps) + "," + format_double(report.theta_true) + "," + format_double(r.mean_theta) + "," +
           format_double(r.mse_theta) + "\n";
  }
  return out;
}

std::map<std::string, std::string> diagnostics_csv(const DiagnosticsReport& rep) {
  std::map<std::string, std::string> files;
  const std::size_t q_count = rep.fine_grid.size();

  std::string counts = "implementation,theta,tau,objective,preprocessing_objective,difference,suboptimal\n";
  std::string ratios = "implementation,theta,tau,ratio\n";
  for (int impl : {kRestricted, kUnrestricted}) {
    for (const auto& c : rep.cells) {
      const double theta = rep.copula_grid[c.a];
      const double tau = rep.fine_grid[c.q];
      const double diff = c.objective[impl] - c.objective[kPreprocessing];
      const std::string key = std::string(implementation_name(impl)) + "," + format_double(theta) + "," + format_double(tau);
      counts += key + "," + format_double(c.objective[impl]) + "," + format_double(c.objective[kPreprocessing]) + "," +
                format_double(diff) + "," + (diff > 1e-3 ? "1" : "0") + "\n";
      ratios += key + "," + format_double(c.objective[impl] / c.objective[kPreprocessing]) + "\n";
    }
  }
  files["diag_counts.csv"] = counts;
  files["diag_ratios.csv"] = ratios;

  std::string objective = "implementation,theta,objective\n";
  std::string betas = "implementation,theta_hat,tau,coef,estimate,truth,difference\n";
  for (int impl = 0; impl < 3; ++impl) {
    for (std::size_t a = 0; a < rep.copula_grid.size(); ++a) {
      objective += std::string(implementation_name(impl)) + "," + format_double(rep.copula_grid[a]) + "," +
                   format_double(rep.profile[impl][a]) + "\n";
    }
    const std::size_t a_hat = rep.theta_index[impl];
    const Eigen::MatrixXd& b = rep.betas[impl][a_hat];
    for (std::size_t q = 0; q < q_count; ++q) {
      const Eigen::VectorXd truth = rep.truth.beta(rep.fine_grid[q]);
      for (Eigen::Index c = 0; c < b.cols(); ++c) {
        const double est = b(static_cast<Eigen::Index>(q), c);
        betas += std::string(implementation_name(impl)) + "," + format_double(rep.copula_grid[a_hat]) + "," +
                 format_double(rep.fine_grid[q]) + ",beta_" + std::to_string(c) + "," + format_double(est) + "," +
                 format_double(truth(c)) + "," + format_double(est - truth(c)) + "\n";
      }
    }
  }
  files["diag_objective.csv"] = objective;
  files["diag_betas.csv"] = betas;

  std::string summary =
      "implementation,cells,suboptimal,equal,preprocessing_worse,outer_decile,middle_decile,extreme_theta,modest_theta,"
      "min_ratio,unconverged,theta_hat,seconds\n";
  for (int impl = 0; impl < 3; ++impl) {
    const DiagSummary& s = rep.summary[impl];
    summary += std::string(implementation_name(impl)) + "," + std::to_string(rep.cells.size()) + ",";
    if (impl == kPreprocessing) {
      summary += ",,,,,,,,";
    } else {
      summary += std::to_string(s.suboptimal) + "," + std::to_string(s.equal) + "," + std::to_string(s.preprocessing_worse) +
                 "," + std::to_string(s.outer_decile) + "," + std::to_string(s.middle_decile) + "," +
                 std::to_string(s.extreme_theta) + "," + std::to_string(s.modest_theta) + "," + format_double(s.min_ratio) +
                 "," + std::to_string(s.unconverged) + ",";
    }
    summary += format_double(rep.copula_grid[rep.theta_index[impl]]) + "," + format_double(rep.seconds[impl]) + "\n";
  }
  files["diag_summary.csv"] = summary;
  return files;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

Json manifest_to_json(const RunManifest& m) {
  Json j{
      {"command", m.command},
      {"arguments", m.arguments},
      {"config_path", m.config_path},
      {"threads", m.threads},
      {"versions",
       {{"qrs", kVersion},
        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                      std::to_string(EIGEN_MINOR_VERSION)},
        {"compiler", __VERSION__}}},
      {"started", m.started},
      {"finished", m.finished},
      {"outputs", m.outputs},
      {"warnings", m.warnings},
      {"warning_count", m.warnings.size()},
      {"status", m.error.empty() ? "ok" : "error"},
  };
  if (m.seed) j["seed"] = *m.seed;
  if (!m.error.empty()) j["error"] = m.error;
  if (!m.extra.empty()) j["details"] = m.extra;
  return j;
}

}  // namespace qrs
