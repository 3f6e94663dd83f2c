#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csqr/dataset.hpp"
#include "csqr/density_network.hpp"

namespace csqr {

// Per-location plug-in SQTE estimates over a tau grid, plus the unweighted
// spatial average per tau.  sd is empty unless filled by the bootstrap.
struct SqteSurface {
  std::vector<double> tau_grid;
  std::vector<Point> locations;
  std::vector<int> group_sizes;  // n_p per location
  Eigen::MatrixXd estimates;     // P x |tau|
  std::vector<double> averages;  // |tau|
  Eigen::MatrixXd sd;            // P x |tau| or empty
  std::vector<double> average_sd;

  bool has_sd() const { return sd.size() > 0; }
};

// (1/n_p) sum_i [q(tau | T:=1, X_i, s_p) - q(tau | T:=0, X_i, s_p)]; both
// counterfactual rows reuse the observed X_i and s_p.
double sqte_at_location(const QuantileModel& model, const Dataset& data,
                        const LocationGroup& group, double tau);

// Unweighted mean over locations.
double sqte_average(std::span<const double> per_location);

// Full surface with one forward pass per counterfactual arm.
SqteSurface compute_surface(const QuantileModel& model, const Dataset& data,
                            std::span<const double> tau_grid);

// CSV export: lon,lat,tau,sqte,sd,n_p; one spatial-average row per tau with
// empty lon/lat and n_p = location count.
void write_surface_csv(const std::string& path, const SqteSurface& surface);

// Neighborhood adjustment for spatial confounding: train only on rows near
// a reference point so smooth confounders are approximately constant.
struct AdjustmentConfig {
  double coverage = 0.2;      // rho in (0, 1]
  bool per_location = false;  // default: one center-referenced fit
  int min_rows = 50;

  void validate() const;
};

struct AdjustmentInfo {
  Point reference;
  double radius = 0.0;         // realized, in scaled coordinate units
  std::size_t subset_rows = 0;
  std::size_t total_rows = 0;
  BBox subset_bbox;            // raw coordinates, drives the rebuilt recipe
};

// Smallest-radius row subset around the reference containing at least
// ceil(rho * n) rows.  Distances are Euclidean in min-max scaled
// coordinates; whole location blocks enter in (distance, lon, lat) order,
// so grid-symmetric distance ties stay within one block of the target.
// Returned indices are in ascending row order (rho = 1 reproduces the
// dataset unchanged).
std::vector<int> adjustment_subset(const Dataset& data, Point reference,
                                   double coverage, AdjustmentInfo* info);

// Trains on the subset with node grids rebuilt over the subset's bounding
// box; the model is then applied over the whole domain.  reference
// defaults to the domain (bbox) center.
QuantileModel neighborhood_adjusted_fit(
    const Dataset& data, const RecipeConfig& recipe_cfg,
    const TrainConfig& cfg, const AdjustmentConfig& adj,
    AdjustmentInfo* info = nullptr,
    std::optional<Point> reference = std::nullopt);

// Per-location variant of the adjustment: every location gets its own
// locally fitted model (reference = that location).  Expensive; kept
// behind AdjustmentConfig::per_location.
SqteSurface adjusted_surface_per_location(const Dataset& data,
                                          const RecipeConfig& recipe_cfg,
                                          const TrainConfig& cfg,
                                          const AdjustmentConfig& adj,
                                          std::span<const double> tau_grid);

// Nonparametric bootstrap: resample rows within location groups, refit
// with the same training seed, and take empirical percentiles of the
// surface.  Deterministic given resample_seed.
struct BootstrapResult {
  std::vector<double> tau_grid;
  std::vector<Point> locations;
  Eigen::MatrixXd lo, hi, sd;  // P x |tau|, 2.5 / 97.5 percentiles
  std::vector<double> avg_lo, avg_hi, avg_sd;
  int replicates = 0;
};

BootstrapResult bootstrap_ci(const Dataset& data, const FeatureRecipe& recipe,
                             const TrainConfig& cfg, int B,
                             std::span<const double> tau_grid,
                             std::uint64_t resample_seed);

}  // namespace csqr
