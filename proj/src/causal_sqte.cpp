#include "csqr/causal_sqte.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "csqr/quantile_engine.hpp"

namespace csqr {

void AdjustmentConfig::validate() const {
  if (!(coverage > 0.0 && coverage <= 1.0))
    throw config_error("coverage must lie in (0, 1]");
  if (min_rows < 1) throw config_error("min_rows must be positive");
}

double sqte_at_location(const QuantileModel& model, const Dataset& data,
                        const LocationGroup& group, double tau) {
  if (group.rows.empty())
    throw std::invalid_argument("location group has no rows");
  double sum = 0.0;
  for (int row : group.rows) {
    const auto r = static_cast<std::size_t>(row);
    Eigen::VectorXd f1 = feature_column(data, r, model.recipe, 1.0);
    Eigen::VectorXd f0 = feature_column(data, r, model.recipe, 0.0);
    const double q1 =
        quantile_from_theta(model, forward(model.params, f1), tau);
    const double q0 =
        quantile_from_theta(model, forward(model.params, f0), tau);
    sum += q1 - q0;
  }
  return sum / static_cast<double>(group.rows.size());
}

double sqte_average(std::span<const double> per_location) {
  if (per_location.empty())
    throw std::invalid_argument("no per-location estimates");
  double sum = 0.0;
  for (double v : per_location) sum += v;
  return sum / static_cast<double>(per_location.size());
}

SqteSurface compute_surface(const QuantileModel& model, const Dataset& data,
                            std::span<const double> tau_grid) {
  if (data.size() == 0) throw data_error("empty dataset");
  if (tau_grid.empty()) throw std::invalid_argument("empty tau grid");
  const auto groups = group_by_location(data);
  const auto P = static_cast<Eigen::Index>(groups.size());
  const auto T = static_cast<Eigen::Index>(tau_grid.size());
  const auto n = static_cast<Eigen::Index>(data.size());

  // One forward pass per counterfactual arm over all rows.
  Eigen::MatrixXd X1(model.recipe.feature_length(), n);
  Eigen::MatrixXd X0(model.recipe.feature_length(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X1.col(i) = feature_column(data, static_cast<std::size_t>(i),
                               model.recipe, 1.0);
    X0.col(i) = feature_column(data, static_cast<std::size_t>(i),
                               model.recipe, 0.0);
  }
  Eigen::MatrixXd theta1 = forward_batch(model.params, X1);
  Eigen::MatrixXd theta0 = forward_batch(model.params, X0);

  SqteSurface surface;
  surface.tau_grid.assign(tau_grid.begin(), tau_grid.end());
  surface.estimates.resize(P, T);
  surface.averages.resize(static_cast<std::size_t>(T));
  for (const auto& g : groups) {
    surface.locations.push_back(g.location);
    surface.group_sizes.push_back(static_cast<int>(g.rows.size()));
  }

  for (Eigen::Index ti = 0; ti < T; ++ti) {
    const double tau = tau_grid[static_cast<std::size_t>(ti)];
    for (Eigen::Index p = 0; p < P; ++p) {
      const auto& g = groups[static_cast<std::size_t>(p)];
      double sum = 0.0;
      for (int row : g.rows) {
        const double q1 =
            quantile_from_theta(model, theta1.col(row), tau);
        const double q0 =
            quantile_from_theta(model, theta0.col(row), tau);
        sum += q1 - q0;
      }
      surface.estimates(p, ti) = sum / static_cast<double>(g.rows.size());
    }
    double avg = 0.0;
    for (Eigen::Index p = 0; p < P; ++p) avg += surface.estimates(p, ti);
    surface.averages[static_cast<std::size_t>(ti)] =
        avg / static_cast<double>(P);
  }
  return surface;
}

void write_surface_csv(const std::string& path, const SqteSurface& surface) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot open '" + path + "' for writing");
  out << "lon,lat,tau,sqte,sd,n_p\n";
  const auto P = static_cast<Eigen::Index>(surface.locations.size());
  for (std::size_t ti = 0; ti < surface.tau_grid.size(); ++ti) {
    const auto t = static_cast<Eigen::Index>(ti);
    for (Eigen::Index p = 0; p < P; ++p) {
      const auto& s = surface.locations[static_cast<std::size_t>(p)];
      out << format_double(s.x) << ',' << format_double(s.y) << ','
          << format_double(surface.tau_grid[ti]) << ','
          << format_double(surface.estimates(p, t)) << ',';
      if (surface.has_sd()) out << format_double(surface.sd(p, t));
      out << ',' << surface.group_sizes[static_cast<std::size_t>(p)] << '\n';
    }
    out << ",," << format_double(surface.tau_grid[ti]) << ','
        << format_double(surface.averages[ti]) << ',';
    if (surface.has_sd()) out << format_double(surface.average_sd[ti]);
    out << ',' << P << '\n';
  }
  if (!out) throw data_error("failed writing '" + path + "'");
}

std::vector<int> adjustment_subset(const Dataset& data, Point reference,
                                   double coverage, AdjustmentInfo* info) {
  if (data.size() == 0) throw data_error("empty dataset");
  if (!(coverage > 0.0 && coverage <= 1.0))
    throw config_error("coverage must lie in (0, 1]");
  const BBox box = data.coord_bbox();
  const Point ref_scaled = scale_point(box, reference);
  const auto groups = group_by_location(data);

  struct BlockDist {
    double dist;
    Point loc;
    const LocationGroup* group;
  };
  std::vector<BlockDist> blocks;
  blocks.reserve(groups.size());
  for (const auto& g : groups)
    blocks.push_back(
        {distance(scale_point(box, g.location), ref_scaled), g.location, &g});
  std::sort(blocks.begin(), blocks.end(), [](const BlockDist& a,
                                             const BlockDist& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    if (a.loc.x != b.loc.x) return a.loc.x < b.loc.x;
    return a.loc.y < b.loc.y;
  });

  const auto target = static_cast<std::size_t>(
      std::ceil(coverage * static_cast<double>(data.size())));
  std::vector<int> rows;
  double radius = 0.0;
  for (const auto& blk : blocks) {
    if (rows.size() >= target) break;
    rows.insert(rows.end(), blk.group->rows.begin(), blk.group->rows.end());
    radius = blk.dist;
  }
  std::sort(rows.begin(), rows.end());

  if (info) {
    info->reference = reference;
    info->radius = radius;
    info->subset_rows = rows.size();
    info->total_rows = data.size();
    BBox sub;
    bool first = true;
    for (int r : rows) {
      const Point s = data.location(static_cast<std::size_t>(r));
      if (first) {
        sub = BBox{s.x, s.y, s.x, s.y};
        first = false;
      } else {
        sub.xmin = std::min(sub.xmin, s.x);
        sub.ymin = std::min(sub.ymin, s.y);
        sub.xmax = std::max(sub.xmax, s.x);
        sub.ymax = std::max(sub.ymax, s.y);
      }
    }
    info->subset_bbox = sub;
  }
  return rows;
}

QuantileModel neighborhood_adjusted_fit(const Dataset& data,
                                        const RecipeConfig& recipe_cfg,
                                        const TrainConfig& cfg,
                                        const AdjustmentConfig& adj,
                                        AdjustmentInfo* info,
                                        std::optional<Point> reference) {
  adj.validate();
  const Point ref = reference.value_or(data.coord_bbox().center());
  AdjustmentInfo local;
  const std::vector<int> rows =
      adjustment_subset(data, ref, adj.coverage, &local);
  if (rows.size() < static_cast<std::size_t>(adj.min_rows))
    throw data_error("adjustment subset has " + std::to_string(rows.size()) +
                     " rows, fewer than the minimum " +
                     std::to_string(adj.min_rows));
  Dataset subset = select_rows(data, rows);
  // Node grids are rebuilt on the subregion so the spatial features keep
  // their resolution relative to the retained area.
  const FeatureRecipe recipe =
      build_recipe(recipe_cfg, subset.coord_bbox(), subset.covariate_count());
  if (info) *info = local;
  return train(subset, recipe, cfg);
}

SqteSurface adjusted_surface_per_location(const Dataset& data,
                                          const RecipeConfig& recipe_cfg,
                                          const TrainConfig& cfg,
                                          const AdjustmentConfig& adj,
                                          std::span<const double> tau_grid) {
  adj.validate();
  if (tau_grid.empty()) throw std::invalid_argument("empty tau grid");
  const auto groups = group_by_location(data);
  const auto P = static_cast<Eigen::Index>(groups.size());
  const auto T = static_cast<Eigen::Index>(tau_grid.size());

  SqteSurface surface;
  surface.tau_grid.assign(tau_grid.begin(), tau_grid.end());
  surface.estimates.resize(P, T);
  for (Eigen::Index p = 0; p < P; ++p) {
    const auto& g = groups[static_cast<std::size_t>(p)];
    surface.locations.push_back(g.location);
    surface.group_sizes.push_back(static_cast<int>(g.rows.size()));
    QuantileModel local = neighborhood_adjusted_fit(data, recipe_cfg, cfg, adj,
                                                    nullptr, g.location);
    for (Eigen::Index ti = 0; ti < T; ++ti)
      surface.estimates(p, ti) = sqte_at_location(
          local, data, g, tau_grid[static_cast<std::size_t>(ti)]);
  }
  surface.averages.resize(static_cast<std::size_t>(T));
  for (Eigen::Index ti = 0; ti < T; ++ti) {
    double avg = 0.0;
    for (Eigen::Index p = 0; p < P; ++p) avg += surface.estimates(p, ti);
    surface.averages[static_cast<std::size_t>(ti)] =
        avg / static_cast<double>(P);
  }
  return surface;
}

// Empirical percentile with linear interpolation between order statistics.
static double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= v.size()) return v.back();
  const double w = pos - static_cast<double>(lo);
  return v[lo] + w * (v[lo + 1] - v[lo]);
}

static double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mean =
      std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

BootstrapResult bootstrap_ci(const Dataset& data, const FeatureRecipe& recipe,
                             const TrainConfig& cfg, int B,
                             std::span<const double> tau_grid,
                             std::uint64_t resample_seed) {
  if (B < 2) throw config_error("bootstrap needs at least 2 replicates");
  if (tau_grid.empty()) throw std::invalid_argument("empty tau grid");
  const auto groups = group_by_location(data);

  std::vector<SqteSurface> surfaces;
  surfaces.reserve(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) {
    Rng rng(derive_seed(resample_seed, 0xB00757A9,
                        static_cast<std::uint64_t>(b)));
    std::vector<int> rows;
    rows.reserve(data.size());
    for (const auto& g : groups) {
      const auto np = g.rows.size();
      for (std::size_t i = 0; i < np; ++i) {
        const auto j = static_cast<std::size_t>(rng.next_u64() % np);
        rows.push_back(g.rows[j]);
      }
    }
    Dataset resampled = select_rows(data, rows);
    // Same training seed every refit: variation comes from the resampling
    // alone, so degenerate identical resamples give zero-width intervals.
    QuantileModel refit = train(resampled, recipe, cfg);
    surfaces.push_back(compute_surface(refit, data, tau_grid));
  }

  const auto& first = surfaces.front();
  const auto P = static_cast<Eigen::Index>(first.locations.size());
  const auto T = static_cast<Eigen::Index>(tau_grid.size());
  BootstrapResult result;
  result.tau_grid.assign(tau_grid.begin(), tau_grid.end());
  result.locations = first.locations;
  result.replicates = B;
  result.lo.resize(P, T);
  result.hi.resize(P, T);
  result.sd.resize(P, T);
  result.avg_lo.resize(static_cast<std::size_t>(T));
  result.avg_hi.resize(static_cast<std::size_t>(T));
  result.avg_sd.resize(static_cast<std::size_t>(T));

  std::vector<double> draws(static_cast<std::size_t>(B));
  for (Eigen::Index ti = 0; ti < T; ++ti) {
    for (Eigen::Index p = 0; p < P; ++p) {
      for (int b = 0; b < B; ++b)
        draws[static_cast<std::size_t>(b)] =
            surfaces[static_cast<std::size_t>(b)].estimates(p, ti);
      result.lo(p, ti) = percentile(draws, 0.025);
      result.hi(p, ti) = percentile(draws, 0.975);
      result.sd(p, ti) = sample_sd(draws);
    }
    for (int b = 0; b < B; ++b)
      draws[static_cast<std::size_t>(b)] =
          surfaces[static_cast<std::size_t>(b)]
              .averages[static_cast<std::size_t>(ti)];
    result.avg_lo[static_cast<std::size_t>(ti)] = percentile(draws, 0.025);
    result.avg_hi[static_cast<std::size_t>(ti)] = percentile(draws, 0.975);
    result.avg_sd[static_cast<std::size_t>(ti)] = sample_sd(draws);
  }
  return result;
}

}  // namespace csqr
