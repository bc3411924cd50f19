#pragma once

#include "metab/models.hpp"
#include "metab/tabio.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace metab {

// Top fractile grids used by the experiments: the 26-point grid for
// density studies and the 22-point grid (top 0.1, 1, 5, 10, ..., 95, 100
// percentiles) for top-share studies.
std::vector<double> density_fractile_grid();    // K = 26
std::vector<double> topshare_fractile_grid();   // K = 22

// Run the loop body for indices [0, count) on up to `threads` workers.
// Rethrows the first exception after joining.
void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t)>& body);

// Worker count: METAB_THREADS caps hardware concurrency when set.
unsigned default_threads();

struct TabulationResult {
  TabulatedSummary summary;
  double sample_mean = 0.0;
  double sample_sd = 0.0;  // the individual-sample sd, infeasible from real tables
};

// Stream n draws into bins at fixed population thresholds t_k = Q(1 - p_k)
// (bottom threshold = the support's lower end). Never materializes the
// sample.
TabulationResult tabulate_fixed_thresholds(const Distribution& dist,
                                           const std::vector<double>& fractiles,
                                           std::size_t n, RngStream& rng);

// Tabulate a materialized sample at its own top-fractile order statistics
// (selection per threshold, no full sort). The sample is reordered in
// place.
TabulatedSummary tabulate_empirical(std::vector<double>& sample,
                                    const std::vector<double>& fractiles);

struct ExperimentConfig {
  ModelSpec model;
  std::vector<std::string> methods = {"me"};  // me | piketty | bk
  std::vector<double> bk_c = {0.1, 0.5, 1.0, 1.5};
  std::vector<std::size_t> sample_sizes = {10000};
  std::vector<double> p0 = {0.001, 0.01, 0.05, 0.1, 0.2, 0.3,
                            0.4,   0.5,  0.6,  0.7, 0.8, 0.9};
  std::size_t replications = 200;
  std::uint64_t seed = 20190801;
  std::vector<double> threshold_fractiles = topshare_fractile_grid();
  bool empirical_thresholds = false;  // default: fixed population thresholds
  std::vector<double> eval_quantiles;  // density-RMSE evaluation grid

  static ExperimentConfig from_json(const std::string& text);
  std::string to_json() const;
};

struct SimCell {
  double rel_bias = 0.0;
  double rel_rmse = 0.0;
  std::size_t failures = 0;
};

// Bias/RMSE matrix over (method, n, p0). Cells are reduced in replication
// order, so reports are byte-identical for a fixed (config, seed) no
// matter the worker count.
struct SimReport {
  ExperimentConfig config;
  std::vector<std::string> method_names;
  std::vector<std::size_t> sample_sizes;
  std::vector<double> p0;
  std::vector<SimCell> cells;  // [method][n][p0] flattened
  double wall_seconds = 0.0;

  const SimCell& cell(std::size_t method, std::size_t n_idx,
                      std::size_t p_idx) const;
  std::string to_csv() const;   // rows = method x n, columns = p0
  std::string to_json() const;  // includes metadata
};

SimReport run_experiment(const ExperimentConfig& cfg,
                         unsigned threads = default_threads());

// Relative density RMSE at true-quantile evaluation points, per method.
struct DensityRmseReport {
  ExperimentConfig config;
  std::vector<std::string> method_names;
  std::vector<std::size_t> sample_sizes;
  std::vector<double> quantiles;
  // rel RMSE of f_hat/f - 1, [method][n][quantile] flattened
  std::vector<double> rmse;
  double wall_seconds = 0.0;

  double at(std::size_t method, std::size_t n_idx, std::size_t q_idx) const;
  std::string to_csv() const;  // long form: method,n,tau,rel_rmse
};

DensityRmseReport density_rmse_experiment(const ExperimentConfig& cfg,
                                          unsigned threads = default_threads());

}  // namespace metab
