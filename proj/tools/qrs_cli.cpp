#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qrs/bootstrap.hpp"
#include "qrs/error.hpp"
#include "qrs/estimator.hpp"
#include "qrs/io.hpp"
#include "qrs/parallel.hpp"
#include "qrs/simulation.hpp"

namespace fs = std::filesystem;
using namespace qrs;

namespace {

struct Common {
  int threads = 0;
  std::vector<std::string> argv;
};

void finish(RunManifest& m, const fs::path& out, const std::string& error = {}) {
  m.finished = utc_timestamp();
  m.error = error;
  write_text(out / "manifest.json", manifest_to_json(m).dump(2) + "\n");
}

void emit(RunManifest& m, const fs::path& path, const std::string& text) {
  write_text(path, text);
  m.outputs.push_back(path.string());
}

// Writes the manifest with the error message before the error propagates.
template <typename Body>
void guarded(RunManifest& m, const fs::path& out, Body&& body) {
  try {
    body();
  } catch (const std::exception& ex) {
    try {
      finish(m, out, ex.what());
    } catch (const std::exception&) {
    }
    throw;
  }
}

EstimationConfig config_or_default(const std::string& path) {
  return path.empty() ? EstimationConfig{} : load_config(path);
}

void record_fit_warnings(RunManifest& m, const QrsDiagnostics& d) {
  for (const auto& f : d.flagged) m.warnings.push_back(f);
}

struct SimulateArgs {
  std::size_t n = 10000;
  int k = 2;
  double theta = 0.5;
  std::uint64_t seed = 1;
  std::uint64_t constants_seed = DgpConfig{}.constants_seed;
  std::string out = ".";
};

void cmd_simulate(const SimulateArgs& a, const Common& common) {
  RunManifest m;
  m.command = "simulate";
  m.arguments = common.argv;
  m.seed = a.seed;
  m.threads = common.threads;
  m.started = utc_timestamp();
  const fs::path out(a.out);
  guarded(m, out, [&] {
    DgpConfig cfg;
    cfg.n = a.n;
    cfg.k = a.k;
    cfg.theta_true = a.theta;
    cfg.seed = a.seed;
    cfg.constants_seed = a.constants_seed;
    const Simulation sim = simulate_dgp(cfg);
    emit(m, out / "dataset.csv", dataset_to_csv(sim.data));
    emit(m, out / "truth.json", truth_to_json(sim.truth).dump(2) + "\n");
    m.extra = {{"n", sim.data.n()}, {"k", sim.data.k()}, {"participants", sim.data.n_participants}};
    finish(m, out);
    std::cout << "simulated " << sim.data.n() << " rows (" << sim.data.n_participants << " participants) into " << out.string()
              << "\n";
  });
}

struct EstimateArgs {
  std::string data;
  std::string algorithm = "alg2";
  std::string config;
  std::size_t p = 0;
  std::string out = ".";
};

void cmd_estimate(const EstimateArgs& a, const Common& common) {
  RunManifest m;
  m.command = "estimate";
  m.arguments = common.argv;
  m.config_path = a.config;
  m.threads = common.threads;
  m.started = utc_timestamp();
  const fs::path out(a.out);
  guarded(m, out, [&] {
    EstimationConfig cfg = config_or_default(a.config);
    if (a.p > 0) cfg.p = a.p;
    const Algorithm alg = parse_algorithm(a.algorithm);
    if (alg == Algorithm::Alg1Repeated) throw ValidationError("estimate supports baseline, alg2 and alg3");
    const Dataset data = load_dataset(a.data);
    EstimatorOptions opts;
    opts.solver = cfg.solver;
    opts.instrument = cfg.instrument;
    opts.threads = common.threads;
    const QrsFit fit = run_algorithm(alg, data, cfg.copula_grid, cfg.fine_grid, cfg.coarse_grid, cfg.p, opts);
    emit(m, out / "fit.json", fit_to_json(fit).dump() + "\n");
    emit(m, out / "beta.csv", beta_csv(fit.fine_grid, fit.beta));
    record_fit_warnings(m, fit.diagnostics);
    m.extra = {{"theta_hat", fit.theta_hat}, {"seconds", fit.diagnostics.seconds_total}, {"config", config_to_json(cfg)}};
    finish(m, out);
    std::cout << "theta_hat = " << fit.theta_hat << " (" << fit.algorithm << ", " << fit.diagnostics.seconds_total
              << " s, " << fit.diagnostics.unconverged << " flagged cells)\n";
  });
}

struct BootstrapArgs {
  std::string data;
  std::string fit;
  std::string config;
  std::size_t j = 100;
  std::string variant = "reduced";
  std::size_t p = 0;
  std::uint64_t seed = 1;
  double level = 0.9;
  bool betas = false;
  std::string out = ".";
};

void cmd_bootstrap(const BootstrapArgs& a, const Common& common) {
  RunManifest m;
  m.command = "bootstrap";
  m.arguments = common.argv;
  m.config_path = a.config;
  m.seed = a.seed;
  m.threads = common.threads;
  m.started = utc_timestamp();
  const fs::path out(a.out);
  guarded(m, out, [&] {
    if (!fs::exists(a.fit)) throw ValidationError("fit file '" + a.fit + "' not found; run estimate first");
    EstimationConfig cfg = config_or_default(a.config);
    const Dataset data = load_dataset(a.data);
    QrsFit fit;
    try {
      fit = fit_from_json(Json::parse(read_text(a.fit)));
    } catch (const Json::parse_error& e) {
      throw ValidationError("cannot parse fit file '" + a.fit + "': " + e.what());
    }
    // The fit carries the grids it was estimated on.
    const CopulaParamGrid copula_grid(fit.theta_grid);
    const QuantileGrid fine(fit.fine_grid, fit.epsilon);
    if (fit.coarse_grid.empty()) throw ValidationError("fit has no stored coarse-grid estimates; use alg2 or alg3");
    const QuantileGrid coarse(fit.coarse_grid, fit.epsilon);

    BootstrapOptions opts;
    opts.draws = a.j;
    if (a.variant == "reduced") {
      opts.variant = BootstrapVariant::Reduced;
    } else if (a.variant == "refined") {
      opts.variant = BootstrapVariant::Refined;
    } else {
      throw ValidationError("unknown variant '" + a.variant + "' (expected reduced or refined)");
    }
    opts.p = a.p > 0 ? a.p : cfg.p;
    opts.seed = a.seed;
    opts.estimator.solver = cfg.solver;
    opts.estimator.instrument = fit.instrument;
    opts.threads = common.threads;
    const BootstrapRun run = bootstrap_qrs(data, fit, copula_grid, fine, coarse, opts);
    emit(m, out / "draws.json", draws_to_json(run, a.betas).dump() + "\n");
    const Bands bands = confidence_bands(run.draws, fit.fine_grid, a.level);
    emit(m, out / "bands.csv", bands_csv(bands));
    for (const auto& d : run.draws) {
      if (!d.valid) m.warnings.push_back("draw " + std::to_string(d.index) + ": " + d.error);
    }
    m.extra = {{"draws", run.draws.size()}, {"invalid", run.invalid}, {"seconds", run.seconds_total}, {"level", a.level}};
    finish(m, out);
    std::cout << run.draws.size() << " draws (" << run.invalid << " invalid) in " << run.seconds_total << " s\n";
  });
}

BenchmarkConfig bench_preset(const std::string& name) {
  BenchmarkConfig cfg;
  const std::vector<Algorithm> all = {Algorithm::Baseline, Algorithm::Alg1Repeated, Algorithm::Alg2, Algorithm::Alg3};
  if (name == "paper-small") {
    cfg.sizes = {{2000, 2}, {2000, 10}};
    cfg.algorithms = all;
    cfg.reps = 2;
  } else if (name == "paper") {
    cfg.sizes = {{10000, 2}, {10000, 10}, {10000, 20}, {20000, 2}, {20000, 10}, {20000, 20}};
    cfg.algorithms = all;
    cfg.reps = 1;
  } else if (name == "accuracy") {
    cfg.sizes = {{10000, 2}};
    cfg.algorithms = {Algorithm::Alg2, Algorithm::Alg3};
    cfg.reps = 50;
  } else {
    throw ValidationError("unknown preset '" + name + "' (expected paper-small, paper or accuracy)");
  }
  return cfg;
}

struct BenchArgs {
  std::string preset = "paper-small";
  std::size_t reps = 0;
  std::uint64_t seed = 1;
  std::string algorithms;
  std::string out = ".";
};

void cmd_bench(const BenchArgs& a, const Common& common) {
  RunManifest m;
  m.command = "bench";
  m.arguments = common.argv;
  m.seed = a.seed;
  m.threads = common.threads;
  m.started = utc_timestamp();
  const fs::path out(a.out);
  guarded(m, out, [&] {
    BenchmarkConfig cfg = bench_preset(a.preset);
    if (a.reps > 0) cfg.reps = a.reps;
    cfg.seed = a.seed;
    if (!a.algorithms.empty()) {
      cfg.algorithms.clear();
      std::string item;
      std::istringstream in(a.algorithms);
      while (std::getline(in, item, ',')) cfg.algorithms.push_back(parse_algorithm(item));
    }
    // Reps share the workers; each estimation stays single-threaded so timings
    // are comparable across algorithms.
    cfg.rep_threads = common.threads > 0 ? common.threads : default_thread_count();
    cfg.estimator.threads = 1;
    const ExperimentReport report = run_benchmark(cfg);
    emit(m, out / "bench_times.csv", bench_times_csv(report));
    emit(m, out / "bench_mse.csv", bench_mse_csv(report));
    for (const auto& r : report.reps) {
      if (!r.ok) m.warnings.push_back(algorithm_name(r.algorithm) + " rep " + std::to_string(r.rep) + ": " + r.error);
    }
    m.extra = {{"preset", a.preset}, {"reps", cfg.reps}};
    finish(m, out);
    std::cout << bench_times_csv(report);
  });
}

struct DiagnoseArgs {
  std::string preset = "section5-small";
  std::uint64_t seed = 1;
  std::string out = ".";
};

void cmd_diagnose(const DiagnoseArgs& a, const Common& common) {
  RunManifest m;
  m.command = "diagnose";
  m.arguments = common.argv;
  m.seed = a.seed;
  m.threads = common.threads;
  m.started = utc_timestamp();
  const fs::path out(a.out);
  guarded(m, out, [&] {
    DiagnosticsConfig cfg;
    cfg.dgp.k = 2;
    cfg.dgp.seed = a.seed;
    if (a.preset == "section5") {
      cfg.dgp.n = 10000;
    } else if (a.preset == "section5-small") {
      cfg.dgp.n = 2000;
    } else {
      throw ValidationError("unknown preset '" + a.preset + "' (expected section5 or section5-small)");
    }
    cfg.threads = common.threads;
    const DiagnosticsReport rep = numerical_diagnostics(cfg);
    for (const auto& [name, text] : diagnostics_csv(rep)) emit(m, out / name, text);
    m.extra = {{"preset", a.preset}, {"n", cfg.dgp.n}};
    finish(m, out);
    for (int impl : {kRestricted, kUnrestricted}) {
      const DiagSummary& s = rep.summary[impl];
      std::cout << implementation_name(impl) << ": suboptimal " << s.suboptimal << ", min ratio " << s.min_ratio
                << ", theta_hat " << rep.copula_grid[rep.theta_index[impl]] << "\n";
    }
    std::cout << "preprocessing: theta_hat " << rep.copula_grid[rep.theta_index[kPreprocessing]] << "\n";
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantile regression with selection: estimation, bootstrap and simulation tools"};
  app.require_subcommand(1);
  Common common;
  for (int i = 1; i < argc; ++i) common.argv.emplace_back(argv[i]);
  app.add_option("--threads", common.threads, "Worker cap (default: QRS_THREADS or all cores)")->check(CLI::NonNegativeNumber);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Draw a dataset from the simulation design");
  s->add_option("--n", sim.n, "Sample size")->check(CLI::Range(100, 100000000));
  s->add_option("--k", sim.k, "Columns of X including the intercept")->check(CLI::PositiveNumber);
  s->add_option("--theta", sim.theta, "Gaussian copula parameter");
  s->add_option("--seed", sim.seed, "Seed for the observations");
  s->add_option("--constants-seed", sim.constants_seed, "Seed for the model constants");
  s->add_option("--out", sim.out, "Output directory");

  EstimateArgs est;
  auto* e = app.add_subcommand("estimate", "Estimate the copula parameter and the quantile process");
  e->add_option("--data", est.data, "Dataset CSV")->required();
  e->add_option("--algorithm", est.algorithm, "baseline, alg2 or alg3");
  e->add_option("--config", est.config, "JSON configuration");
  e->add_option("--p", est.p, "Candidates refined by alg3");
  e->add_option("--out", est.out, "Output directory");

  BootstrapArgs bs;
  auto* b = app.add_subcommand("bootstrap", "Weighted bootstrap from a stored fit");
  b->add_option("--data", bs.data, "Dataset CSV")->required();
  b->add_option("--fit", bs.fit, "fit.json written by estimate")->required();
  b->add_option("--config", bs.config, "JSON configuration (solver settings, p)");
  b->add_option("--j", bs.j, "Number of draws")->check(CLI::PositiveNumber);
  b->add_option("--variant", bs.variant, "reduced or refined");
  b->add_option("--p", bs.p, "Candidates for the refined variant");
  b->add_option("--seed", bs.seed, "Master seed");
  b->add_option("--level", bs.level, "Band coverage level")->check(CLI::Range(0.0, 1.0));
  b->add_flag("--betas", bs.betas, "Store every draw's coefficient process in draws.json");
  b->add_option("--out", bs.out, "Output directory");

  BenchArgs bn;
  auto* be = app.add_subcommand("bench", "Timing and accuracy benchmark");
  be->add_option("--preset", bn.preset, "paper-small, paper or accuracy");
  be->add_option("--reps", bn.reps, "Override the preset's rep count");
  be->add_option("--seed", bn.seed, "Master seed");
  be->add_option("--algorithms", bn.algorithms, "Comma-separated subset of baseline,alg1-repeated,alg2,alg3");
  be->add_option("--out", bn.out, "Output directory");

  DiagnoseArgs dg;
  auto* d = app.add_subcommand("diagnose", "Numerical-precision comparison of solver implementations");
  d->add_option("--preset", dg.preset, "section5 or section5-small");
  d->add_option("--seed", dg.seed, "Seed for the simulated dataset");
  d->add_option("--out", dg.out, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*s) cmd_simulate(sim, common);
    if (*e) cmd_estimate(est, common);
    if (*b) cmd_bootstrap(bs, common);
    if (*be) cmd_bench(bn, common);
    if (*d) cmd_diagnose(dg, common);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
