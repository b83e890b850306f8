#include "qrs/model_types.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "qrs/error.hpp"

namespace qrs {

namespace {

const std::vector<double>* find_column(const RawTable& raw, const std::string& name) {
  for (std::size_t c = 0; c < raw.columns.size(); ++c) {
    if (raw.columns[c] == name) return &raw.values[c];
  }
  return nullptr;
}

bool is_instrument_name(const std::string& name) {
  return name.size() >= 2 && name[0] == 'z' &&
         std::all_of(name.begin() + 1, name.end(), [](char ch) { return ch >= '0' && ch <= '9'; });
}

void check_strictly_increasing(const std::vector<double>& values, const char* what) {
  if (values.empty()) throw ValidationError(std::string(what) + ": grid is empty");
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (!(values[i] > values[i - 1])) {
      std::ostringstream msg;
      msg << what << ": values must be strictly increasing (position " << i << ")";
      throw ValidationError(msg.str());
    }
  }
}

}  // namespace

Eigen::MatrixXd Dataset::propensity_design() const {
  const Eigen::Index n_rows = x.rows();
  Eigen::MatrixXd z(n_rows, 1 + z1.cols() + (x.cols() - 1));
  z.col(0).setOnes();
  z.middleCols(1, z1.cols()) = z1;
  if (x.cols() > 1) z.rightCols(x.cols() - 1) = x.rightCols(x.cols() - 1);
  return z;
}

std::vector<std::size_t> Dataset::participant_indices() const {
  std::vector<std::size_t> idx;
  idx.reserve(n_participants);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] == 1) idx.push_back(i);
  }
  return idx;
}

Dataset validate_dataset(const RawTable& raw) {
  if (raw.columns.size() != raw.values.size()) {
    throw ValidationError("table has mismatched header and column count");
  }
  for (const char* required : {"y", "d", "z1"}) {
    if (find_column(raw, required) == nullptr) {
      throw ValidationError(std::string("missing required column '") + required + "'");
    }
  }
  const auto& ycol = *find_column(raw, "y");
  const auto& dcol = *find_column(raw, "d");
  const std::size_t n = ycol.size();
  for (const auto& col : raw.values) {
    if (col.size() != n) throw ValidationError("columns have different lengths");
  }
  if (n == 0) throw ValidationError("dataset has no rows");

  std::vector<const std::vector<double>*> zcols;
  std::vector<const std::vector<double>*> xcols;
  Dataset data;
  for (std::size_t c = 0; c < raw.columns.size(); ++c) {
    const auto& name = raw.columns[c];
    if (name == "y" || name == "d") continue;
    if (is_instrument_name(name)) {
      zcols.push_back(&raw.values[c]);
      data.z1_names.push_back(name);
    } else {
      xcols.push_back(&raw.values[c]);
      data.x_names.push_back(name);
    }
  }

  const std::size_t k = xcols.size() + 1;
  data.y.resize(static_cast<Eigen::Index>(n));
  data.d.resize(n);
  data.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  data.z1.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(zcols.size()));
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const double di = dcol[i];
    if (di != 0.0 && di != 1.0) {
      std::ostringstream msg;
      msg << "participation indicator d must be 0 or 1 (row " << i + 1 << ")";
      throw ValidationError(msg.str());
    }
    if (!std::isfinite(ycol[i])) {
      std::ostringstream msg;
      msg << "non-finite outcome (row " << i + 1 << ")";
      throw ValidationError(msg.str());
    }
    if (di == 0.0 && ycol[i] != 0.0) {
      std::ostringstream msg;
      msg << "outcome nonzero for non-participant (row " << i + 1 << ")";
      throw ValidationError(msg.str());
    }
    data.d[i] = static_cast<int>(di);
    data.y(row) = ycol[i];
    data.x(row, 0) = 1.0;
    for (std::size_t c = 0; c < xcols.size(); ++c) {
      const double v = (*xcols[c])[i];
      if (!std::isfinite(v)) throw ValidationError("non-finite value in column '" + data.x_names[c] + "'");
      data.x(row, static_cast<Eigen::Index>(c + 1)) = v;
    }
    for (std::size_t c = 0; c < zcols.size(); ++c) {
      const double v = (*zcols[c])[i];
      if (!std::isfinite(v)) throw ValidationError("non-finite value in column '" + data.z1_names[c] + "'");
      data.z1(row, static_cast<Eigen::Index>(c)) = v;
    }
    if (di == 1.0) ++data.n_participants;
  }

  if (data.n_participants < k + 1) {
    std::ostringstream msg;
    msg << "need at least K+1 = " << k + 1 << " participants, found " << data.n_participants;
    throw ValidationError(msg.str());
  }
  const auto idx = data.participant_indices();
  Eigen::MatrixXd xp(static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(k));
  for (std::size_t r = 0; r < idx.size(); ++r) {
    xp.row(static_cast<Eigen::Index>(r)) = data.x.row(static_cast<Eigen::Index>(idx[r]));
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xp);
  qr.setThreshold(1e-10);
  if (qr.rank() < static_cast<Eigen::Index>(k)) {
    std::ostringstream msg;
    msg << "participant design matrix is rank deficient (rank " << qr.rank() << " < K = " << k << ")";
    throw ValidationError(msg.str());
  }
  return data;
}

std::uint64_t dataset_hash(const Dataset& data) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix_bytes = [&h](const void* p, std::size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  const std::uint64_t dims[3] = {data.n(), data.k(), static_cast<std::uint64_t>(data.z1.cols())};
  mix_bytes(dims, sizeof(dims));
  mix_bytes(data.y.data(), sizeof(double) * static_cast<std::size_t>(data.y.size()));
  mix_bytes(data.d.data(), sizeof(int) * data.d.size());
  mix_bytes(data.x.data(), sizeof(double) * static_cast<std::size_t>(data.x.size()));
  mix_bytes(data.z1.data(), sizeof(double) * static_cast<std::size_t>(data.z1.size()));
  return h;
}

QuantileGrid::QuantileGrid(std::vector<double> values, double epsilon)
    : values_(std::move(values)), epsilon_(epsilon) {
  if (!(epsilon_ > 0.0 && epsilon_ < 0.5)) throw ValidationError("quantile grid: epsilon must lie in (0, 0.5)");
  check_strictly_increasing(values_, "quantile grid");
  // Small slack so that 0.01 == epsilon passes despite decimal rounding.
  const double slack = 1e-12;
  if (values_.front() < epsilon_ - slack || values_.back() > 1.0 - epsilon_ + slack) {
    throw ValidationError("quantile grid: values must lie in [epsilon, 1 - epsilon]");
  }
}

QuantileGrid QuantileGrid::uniform(double from, double to, double step, double epsilon) {
  if (!(step > 0.0)) throw ValidationError("quantile grid: step must be positive");
  const auto count = static_cast<long>(std::floor((to - from) / step + 1e-9)) + 1;
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(count));
  for (long i = 0; i < count; ++i) v.push_back(from + static_cast<double>(i) * step);
  // Snap to the nearest representable multiple of 1e-12 to avoid 0.30000000000000004.
  for (auto& t : v) t = std::round(t * 1e12) / 1e12;
  return QuantileGrid(std::move(v), epsilon);
}

QuantileGrid QuantileGrid::percentiles() {
  std::vector<double> v;
  for (int i = 1; i <= 99; ++i) v.push_back(i / 100.0);
  return QuantileGrid(std::move(v), 0.01);
}

QuantileGrid QuantileGrid::deciles() {
  std::vector<double> v;
  for (int i = 1; i <= 9; ++i) v.push_back(i / 10.0);
  return QuantileGrid(std::move(v), 0.01);
}

std::size_t QuantileGrid::median_index() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values_.size(); ++i) {
    if (std::abs(values_[i] - 0.5) < std::abs(values_[best] - 0.5)) best = i;
  }
  return best;
}

std::size_t QuantileGrid::find(double tau) const {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (std::abs(values_[i] - tau) <= 1e-12) return i;
  }
  return values_.size();
}

CopulaParamGrid::CopulaParamGrid(std::vector<double> values) : values_(std::move(values)) {
  check_strictly_increasing(values_, "copula grid");
  for (double t : values_) {
    if (!(t > -1.0 && t < 1.0)) throw ValidationError("copula grid: Gaussian parameter must lie in (-1, 1)");
  }
}

CopulaParamGrid CopulaParamGrid::uniform(double from, double to, double step) {
  if (!(step > 0.0)) throw ValidationError("copula grid: step must be positive");
  const auto count = static_cast<long>(std::floor((to - from) / step + 1e-9)) + 1;
  std::vector<double> v;
  for (long i = 0; i < count; ++i) v.push_back(std::round((from + static_cast<double>(i) * step) * 1e12) / 1e12);
  return CopulaParamGrid(std::move(v));
}

CopulaParamGrid CopulaParamGrid::standard() {
  std::vector<double> v;
  for (int i = -90; i <= 90; ++i) v.push_back(i / 100.0);
  return CopulaParamGrid(std::move(v));
}

void SolverConfig::validate() const {
  if (max_iterations <= 0) throw ValidationError("solver: max_iterations must be positive");
  if (!(gap_tolerance > 0.0)) throw ValidationError("solver: gap_tolerance must be positive");
  if (!(m_init_estimation > 0.0)) throw ValidationError("solver: m_init_estimation must be positive");
  if (!(m_init_bootstrap > 0.0)) throw ValidationError("solver: m_init_bootstrap must be positive");
  if (bad_sign_allowance < 0) throw ValidationError("solver: bad_sign_allowance must be non-negative");
  if (!(bad_sign_refactor_fraction > 0.0 && bad_sign_refactor_fraction < 1.0)) {
    throw ValidationError("solver: bad_sign_refactor_fraction must lie in (0, 1)");
  }
  if (max_preprocess_rounds <= 0) throw ValidationError("solver: max_preprocess_rounds must be positive");
}

}  // namespace qrs
