#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qrs/bootstrap.hpp"
#include "qrs/estimator.hpp"
#include "qrs/simulation.hpp"

namespace qrs {

using Json = nlohmann::json;

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

RawTable parse_csv(const std::string& text);
RawTable read_csv(const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// Header y,d,<instruments>,<covariates>; the intercept column is implied.
std::string dataset_to_csv(const Dataset& data);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

struct EstimationConfig {
  QuantileGrid fine_grid = QuantileGrid::percentiles();
  QuantileGrid coarse_grid = QuantileGrid::deciles();
  CopulaParamGrid copula_grid = CopulaParamGrid::standard();
  SolverConfig solver;
  InstrumentConfig instrument;
  std::size_t p = 3;
};

// Keys: fine_grid / coarse_grid {values | from,to,step ; epsilon},
// copula_grid {values | from,to,step}, solver {SolverConfig fields},
// instrument {degree, scale}, p. Missing keys keep their defaults.
EstimationConfig config_from_json(const Json& j);
Json config_to_json(const EstimationConfig& cfg);
EstimationConfig load_config(const std::filesystem::path& path);

Json fit_to_json(const QrsFit& fit);
QrsFit fit_from_json(const Json& j);

Json truth_to_json(const TruthRecord& truth);
Json draws_to_json(const BootstrapRun& run, bool include_betas);

std::string beta_csv(const std::vector<double>& tau, const Eigen::MatrixXd& beta);
std::string bands_csv(const Bands& bands);
std::string bench_times_csv(const ExperimentReport& report);
std::string bench_mse_csv(const ExperimentReport& report);

// diag_counts, diag_ratios, diag_objective, diag_betas, diag_summary.
std::map<std::string, std::string> diagnostics_csv(const DiagnosticsReport& report);

struct RunManifest {
  std::string command;
  std::vector<std::string> arguments;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  std::string started;
  std::string finished;
  std::vector<std::string> outputs;
  std::vector<std::string> warnings;
  std::string error;
  Json extra = Json::object();
};

std::string utc_timestamp();
Json manifest_to_json(const RunManifest& m);

}  // namespace qrs
