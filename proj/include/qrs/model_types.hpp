#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace qrs {

// Selection sample (Y, D, Z). Non-participants carry y = 0. The design
// matrix always starts with the intercept column.
struct Dataset {
  Eigen::VectorXd y;
  std::vector<int> d;
  Eigen::MatrixXd x;   // N x K, column 0 is the intercept
  Eigen::MatrixXd z1;  // N x L instruments (L >= 1)
  std::vector<std::string> x_names;   // names of columns 1..K-1
  std::vector<std::string> z1_names;
  std::size_t n_participants = 0;

  std::size_t n() const { return static_cast<std::size_t>(y.size()); }
  std::size_t k() const { return static_cast<std::size_t>(x.cols()); }
  double participation_rate() const {
    return n() == 0 ? 0.0 : static_cast<double>(n_participants) / static_cast<double>(n());
  }
  // Propensity regressors (1, z1, x_2..x_K).
  Eigen::MatrixXd propensity_design() const;
  std::vector<std::size_t> participant_indices() const;
};

// Column-oriented table as read from CSV, before validation.
struct RawTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> values;  // one vector per column
};

// Checks the model invariants and prepends the intercept. Throws
// ValidationError naming the offending column or row.
Dataset validate_dataset(const RawTable& raw);

// FNV-1a over the numeric content; used to pair fit files with data.
std::uint64_t dataset_hash(const Dataset& data);

class QuantileGrid {
 public:
  QuantileGrid(std::vector<double> values, double epsilon);

  // {from, from+step, ..., to}; rounding is done on the integer index so
  // the percentiles come out as exact decimal-nearest doubles.
  static QuantileGrid uniform(double from, double to, double step, double epsilon);
  static QuantileGrid percentiles();  // 0.01 .. 0.99
  static QuantileGrid deciles();      // 0.1 .. 0.9

  const std::vector<double>& values() const { return values_; }
  double epsilon() const { return epsilon_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::size_t median_index() const;
  // Index of an exactly matching value (within 1e-12), or size() if absent.
  std::size_t find(double tau) const;

 private:
  std::vector<double> values_;
  double epsilon_;
};

class CopulaParamGrid {
 public:
  explicit CopulaParamGrid(std::vector<double> values);
  static CopulaParamGrid uniform(double from, double to, double step);
  static CopulaParamGrid standard();  // -0.90, -0.89, ..., 0.90

  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

 private:
  std::vector<double> values_;
};

struct SolverConfig {
  int max_iterations = 50;
  double gap_tolerance = 1e-5;
  double m_init_estimation = 0.5;
  double m_init_bootstrap = 1.0;
  int bad_sign_allowance = 0;
  double bad_sign_refactor_fraction = 0.1;
  int max_preprocess_rounds = 6;
  // Crossover from the interior iterate to an exact optimal vertex.
  bool polish = true;

  void validate() const;
};

}  // namespace qrs
