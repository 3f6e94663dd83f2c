#pragma once

#include <Eigen/Dense>
#include <functional>
#include <ostream>
#include <vector>

#include "csqr/causal_sqte.hpp"
#include "csqr/dataset.hpp"
#include "csqr/density_network.hpp"
#include "csqr/sim_gen.hpp"

namespace csqr {

// The five benchmark variants: 1 covariates only, 2 + coordinates,
// 3/4/5 + spatial features at one/two/three resolutions (p = 9/25/49).
struct ModelVariant {
  int id = 1;
  bool adjusted = false;
  double coverage = 0.2;  // used when adjusted

  RecipeConfig recipe_config() const;
  std::string name() const;  // e.g. "Model 3", "Model 1 AD"
};

ModelVariant make_variant(int id, bool adjusted = false,
                          double coverage = 0.2);

// Per-location stratified 80/20 split.  Locations with n_p >= 5 are
// guaranteed rows in both sets; locations with n_p < 2 fall entirely into
// training and are counted in tiny_locations.
struct SplitResult {
  Dataset train;
  Dataset test;
  std::vector<int> train_rows;
  std::vector<int> test_rows;
  int tiny_locations = 0;
};

SplitResult split_dataset(const Dataset& data, double fraction,
                          std::uint64_t seed);

double root_mean_square(std::span<const double> values);

// Per-(location, tau) response-prediction RMISE over the test rows:
// sqrt of the covariate-averaged squared difference between the fitted and
// the generating quantile.  groups must partition the test rows.
Eigen::MatrixXd rmise_response(const QuantileModel& model, const Dataset& test,
                               Scenario sc, std::span<const double> tau_grid,
                               const std::vector<LocationGroup>& groups,
                               int* clamped_out = nullptr);

// Signed per-cell SQTE error of a surface against the generating truth.
Eigen::MatrixXd sqte_error_surface(const SqteSurface& surface);

struct VariantEval {
  ModelVariant variant;
  Eigen::MatrixXd response_rmise;  // P x |tau|
  Eigen::MatrixXd sqte_error;      // P x |tau|, signed
  double final_nll = 0.0;
  int clamped_test_rows = 0;
};

struct ReplicateEval {
  int replicate = 0;
  std::vector<VariantEval> variants;
};

// Generate replicate, split, and fit/evaluate every variant.  SQTE
// surfaces are computed over the held-out rows.
ReplicateEval evaluate_replicate(const ScenarioSpec& spec, int replicate_index,
                                 std::span<const ModelVariant> variants,
                                 const TrainConfig& train_cfg,
                                 std::span<const double> tau_grid,
                                 double train_fraction = 0.8);

// Across-replicate aggregation.  Map cells report the mean and sample
// standard deviation (N-1) over replicates; SQTE map cells use the
// replicate-mean squared error under the root (single replicate: |error|).
// Curves are spatially collapsed per replicate first (response: location
// mean of RMISE; SQTE: spatial root mean square), then averaged.
struct RmiseReport {
  int scenario = 1;
  int replicates = 0;
  std::vector<double> tau_grid;
  std::vector<Point> locations;
  std::vector<ModelVariant> variants;

  std::vector<Eigen::MatrixXd> response_map_mean;  // per variant, P x |tau|
  std::vector<Eigen::MatrixXd> response_map_sd;
  std::vector<Eigen::MatrixXd> sqte_map_rmise;
  std::vector<Eigen::MatrixXd> sqte_map_sd;

  std::vector<std::vector<double>> response_curve_mean;  // per variant, |tau|
  std::vector<std::vector<double>> response_curve_sd;
  std::vector<std::vector<double>> sqte_curve_mean;
  std::vector<std::vector<double>> sqte_curve_sd;

  std::vector<ReplicateEval> raw;
};

RmiseReport aggregate(std::vector<ReplicateEval> evals, int scenario,
                      std::span<const double> tau_grid,
                      std::span<const Point> locations);

// tau in {0.05, 0.10, ..., 0.95}.
std::vector<double> default_tau_grid();

struct StudyConfig {
  ScenarioSpec spec;
  std::vector<ModelVariant> variants;
  TrainConfig train;
  std::vector<double> tau_grid = default_tau_grid();
  double train_fraction = 0.8;
  int threads = 0;  // <= 0: hardware count
};

// Full study: all replicates (independent jobs) evaluated and aggregated.
RmiseReport run_study(const StudyConfig& cfg, std::ostream* log = nullptr);

// Index-sharded worker pool; jobs write disjoint slots, so results do not
// depend on scheduling.  threads <= 0 picks the hardware count.
void parallel_for(int jobs, const std::function<void(int)>& fn,
                  int threads = 0);

}  // namespace csqr
