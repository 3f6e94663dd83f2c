#include "csqr/eval_harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "csqr/quantile_engine.hpp"

namespace csqr {

RecipeConfig ModelVariant::recipe_config() const {
  RecipeConfig cfg;
  switch (id) {
    case 1: break;
    case 2: cfg.include_coordinates = true; break;
    case 3: cfg.node_counts = {9}; break;
    case 4: cfg.node_counts = {9, 25}; break;
    case 5: cfg.node_counts = {9, 25, 49}; break;
    default:
      throw config_error("model variant must be 1..5 (got " +
                         std::to_string(id) + ")");
  }
  return cfg;
}

std::string ModelVariant::name() const {
  std::string n = "Model " + std::to_string(id);
  if (adjusted) n += " AD";
  return n;
}

ModelVariant make_variant(int id, bool adjusted, double coverage) {
  ModelVariant v{id, adjusted, coverage};
  v.recipe_config();  // validates id
  return v;
}

SplitResult split_dataset(const Dataset& data, double fraction,
                          std::uint64_t seed) {
  if (data.size() == 0) throw data_error("cannot split empty dataset");
  if (!(fraction > 0.0 && fraction < 1.0))
    throw config_error("split fraction must lie in (0, 1)");
  SplitResult result;
  Rng rng(derive_seed(seed, 0x5B117));
  for (const auto& g : group_by_location(data)) {
    const auto np = g.rows.size();
    if (np < 2) {
      result.train_rows.insert(result.train_rows.end(), g.rows.begin(),
                               g.rows.end());
      ++result.tiny_locations;
      continue;
    }
    auto n_test = static_cast<std::size_t>(
        std::llround((1.0 - fraction) * static_cast<double>(np)));
    if (np >= 5) n_test = std::clamp<std::size_t>(n_test, 1, np - 1);
    else n_test = std::min(n_test, np - 1);
    std::vector<int> rows = g.rows;
    rng.shuffle(rows);
    std::vector<int> test(rows.begin(),
                          rows.begin() + static_cast<std::ptrdiff_t>(n_test));
    std::vector<int> train(rows.begin() + static_cast<std::ptrdiff_t>(n_test),
                           rows.end());
    std::sort(test.begin(), test.end());
    std::sort(train.begin(), train.end());
    result.test_rows.insert(result.test_rows.end(), test.begin(), test.end());
    result.train_rows.insert(result.train_rows.end(), train.begin(),
                             train.end());
  }
  std::sort(result.train_rows.begin(), result.train_rows.end());
  std::sort(result.test_rows.begin(), result.test_rows.end());
  result.train = select_rows(data, result.train_rows);
  result.test = select_rows(data, result.test_rows);
  return result;
}

double root_mean_square(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("empty value list");
  double ss = 0.0;
  for (double v : values) ss += v * v;
  return std::sqrt(ss / static_cast<double>(values.size()));
}

Eigen::MatrixXd rmise_response(const QuantileModel& model, const Dataset& test,
                               Scenario sc, std::span<const double> tau_grid,
                               const std::vector<LocationGroup>& groups,
                               int* clamped_out) {
  if (!test.has_oracle)
    throw data_error("response RMISE requires oracle columns");
  if (tau_grid.empty()) throw std::invalid_argument("empty tau grid");
  const auto P = static_cast<Eigen::Index>(groups.size());
  const auto T = static_cast<Eigen::Index>(tau_grid.size());
  const auto n = static_cast<Eigen::Index>(test.size());

  Eigen::MatrixXd X(model.recipe.feature_length(), n);
  for (Eigen::Index i = 0; i < n; ++i)
    X.col(i) = feature_column(test, static_cast<std::size_t>(i), model.recipe,
                              test.t[static_cast<std::size_t>(i)]);
  Eigen::MatrixXd theta = forward_batch(model.params, X);

  // Count held-out responses that fall outside the training range (they do
  // not enter the RMISE, which compares quantile curves, but the counter
  // is surfaced for diagnostics).
  if (clamped_out) {
    int clamped = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
      const double v = model.scaler.scale(test.y[i]);
      if (v < 0.0 || v > 1.0) ++clamped;
    }
    *clamped_out = clamped;
  }

  Eigen::MatrixXd out(P, T);
  std::vector<double> xrow(static_cast<std::size_t>(test.covariate_count()));
  std::vector<double> hrow(3);
  for (Eigen::Index p = 0; p < P; ++p) {
    const auto& g = groups[static_cast<std::size_t>(p)];
    if (g.rows.empty()) throw data_error("test group without rows");
    for (Eigen::Index ti = 0; ti < T; ++ti) {
      const double tau = tau_grid[static_cast<std::size_t>(ti)];
      double ss = 0.0;
      for (int row : g.rows) {
        const auto r = static_cast<std::size_t>(row);
        for (std::size_t c = 0; c < xrow.size(); ++c) xrow[c] = test.x[c][r];
        for (std::size_t c = 0; c < 3; ++c) hrow[c] = test.h[c][r];
        const double fitted =
            quantile_from_theta(model, theta.col(row), tau);
        const double truth = true_quantile(sc, tau, test.t[r], xrow, hrow,
                                           test.location(r));
        ss += (fitted - truth) * (fitted - truth);
      }
      out(p, ti) = std::sqrt(ss / static_cast<double>(g.rows.size()));
    }
  }
  return out;
}

Eigen::MatrixXd sqte_error_surface(const SqteSurface& surface) {
  const auto P = static_cast<Eigen::Index>(surface.locations.size());
  const auto T = static_cast<Eigen::Index>(surface.tau_grid.size());
  Eigen::MatrixXd err(P, T);
  for (Eigen::Index p = 0; p < P; ++p)
    for (Eigen::Index ti = 0; ti < T; ++ti)
      err(p, ti) = surface.estimates(p, ti) -
                   true_sqte(surface.tau_grid[static_cast<std::size_t>(ti)],
                             surface.locations[static_cast<std::size_t>(p)]);
  return err;
}

namespace {

// Seed-stream tags for the evaluation pipeline.
enum EvalStream : std::uint64_t {
  kStreamSplit = 0x20,
  kStreamTrain = 0x30,  // + variant id (+0x10 when adjusted)
};

}  // namespace

ReplicateEval evaluate_replicate(const ScenarioSpec& spec, int replicate_index,
                                 std::span<const ModelVariant> variants,
                                 const TrainConfig& train_cfg,
                                 std::span<const double> tau_grid,
                                 double train_fraction) {
  if (variants.empty()) throw config_error("no model variants selected");
  const Dataset data = generate_replicate(spec, replicate_index);
  SplitResult split = split_dataset(
      data, train_fraction,
      derive_seed(spec.seed, kStreamSplit,
                  static_cast<std::uint64_t>(replicate_index)));
  const auto test_groups = group_by_location(split.test);

  ReplicateEval eval;
  eval.replicate = replicate_index;
  for (const ModelVariant& variant : variants) {
    TrainConfig cfg = train_cfg;
    cfg.seed = derive_seed(
        spec.seed,
        kStreamTrain + static_cast<std::uint64_t>(variant.id) +
            (variant.adjusted ? 0x10u : 0u),
        static_cast<std::uint64_t>(replicate_index));
    QuantileModel model;
    if (variant.adjusted) {
      AdjustmentConfig adj;
      adj.coverage = variant.coverage;
      model = neighborhood_adjusted_fit(split.train, variant.recipe_config(),
                                        cfg, adj);
    } else {
      const FeatureRecipe recipe =
          build_recipe(variant.recipe_config(), split.train.coord_bbox(),
                       split.train.covariate_count());
      model = train(split.train, recipe, cfg);
    }

    VariantEval ve;
    ve.variant = variant;
    ve.final_nll = model.meta.final_nll;
    ve.response_rmise = rmise_response(model, split.test, spec.scenario,
                                       tau_grid, test_groups,
                                       &ve.clamped_test_rows);
    // SQTE plug-ins average counterfactual quantiles over each full location
    // group; prediction error is what the held-out rows above are for.
    ve.sqte_error =
        sqte_error_surface(compute_surface(model, data, tau_grid));
    eval.variants.push_back(std::move(ve));
  }
  return eval;
}

RmiseReport aggregate(std::vector<ReplicateEval> evals, int scenario,
                      std::span<const double> tau_grid,
                      std::span<const Point> locations) {
  if (evals.empty()) throw data_error("no replicates to aggregate");
  const auto N = evals.size();
  const auto V = evals.front().variants.size();
  const auto P = static_cast<Eigen::Index>(locations.size());
  const auto T = static_cast<Eigen::Index>(tau_grid.size());
  for (const auto& e : evals) {
    if (e.variants.size() != V)
      throw data_error("replicates disagree on variant list");
    for (const auto& ve : e.variants)
      if (ve.response_rmise.rows() != P || ve.response_rmise.cols() != T ||
          ve.sqte_error.rows() != P || ve.sqte_error.cols() != T)
        throw data_error("replicate surface dimensions disagree");
  }

  RmiseReport report;
  report.scenario = scenario;
  report.replicates = static_cast<int>(N);
  report.tau_grid.assign(tau_grid.begin(), tau_grid.end());
  report.locations.assign(locations.begin(), locations.end());

  const auto mean_sd = [N](std::span<const double> v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(N);
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd =
        N > 1 ? std::sqrt(ss / static_cast<double>(N - 1)) : 0.0;
    return std::pair<double, double>{mean, sd};
  };

  std::vector<double> draws(N);
  for (std::size_t v = 0; v < V; ++v) {
    report.variants.push_back(evals.front().variants[v].variant);
    Eigen::MatrixXd rm_mean(P, T), rm_sd(P, T), sq_rmise(P, T), sq_sd(P, T);
    for (Eigen::Index p = 0; p < P; ++p) {
      for (Eigen::Index ti = 0; ti < T; ++ti) {
        for (std::size_t r = 0; r < N; ++r)
          draws[r] = evals[r].variants[v].response_rmise(p, ti);
        std::tie(rm_mean(p, ti), rm_sd(p, ti)) = mean_sd(draws);
        double ss = 0.0;
        for (std::size_t r = 0; r < N; ++r) {
          const double e = evals[r].variants[v].sqte_error(p, ti);
          draws[r] = std::abs(e);
          ss += e * e;
        }
        sq_rmise(p, ti) = std::sqrt(ss / static_cast<double>(N));
        sq_sd(p, ti) = mean_sd(draws).second;
      }
    }
    report.response_map_mean.push_back(std::move(rm_mean));
    report.response_map_sd.push_back(std::move(rm_sd));
    report.sqte_map_rmise.push_back(std::move(sq_rmise));
    report.sqte_map_sd.push_back(std::move(sq_sd));

    std::vector<double> rc_mean(static_cast<std::size_t>(T)),
        rc_sd(static_cast<std::size_t>(T)), sc_mean(static_cast<std::size_t>(T)),
        sc_sd(static_cast<std::size_t>(T));
    for (Eigen::Index ti = 0; ti < T; ++ti) {
      for (std::size_t r = 0; r < N; ++r)
        draws[r] =
            evals[r].variants[v].response_rmise.col(ti).mean();
      std::tie(rc_mean[static_cast<std::size_t>(ti)],
               rc_sd[static_cast<std::size_t>(ti)]) = mean_sd(draws);
      for (std::size_t r = 0; r < N; ++r)
        draws[r] = std::sqrt(
            evals[r].variants[v].sqte_error.col(ti).squaredNorm() /
            static_cast<double>(P));
      std::tie(sc_mean[static_cast<std::size_t>(ti)],
               sc_sd[static_cast<std::size_t>(ti)]) = mean_sd(draws);
    }
    report.response_curve_mean.push_back(std::move(rc_mean));
    report.response_curve_sd.push_back(std::move(rc_sd));
    report.sqte_curve_mean.push_back(std::move(sc_mean));
    report.sqte_curve_sd.push_back(std::move(sc_sd));
  }
  report.raw = std::move(evals);
  return report;
}

std::vector<double> default_tau_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 19; ++i) grid.push_back(i * 0.05);
  return grid;
}

void parallel_for(int jobs, const std::function<void(int)>& fn, int threads) {
  if (jobs <= 0) return;
  if (threads <= 0)
    threads = static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min(threads, jobs));
  if (threads == 1) {
    for (int i = 0; i < jobs; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < jobs; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

RmiseReport run_study(const StudyConfig& cfg, std::ostream* log) {
  cfg.spec.validate();
  if (cfg.variants.empty()) throw config_error("no model variants selected");
  if (cfg.tau_grid.empty()) throw config_error("empty tau grid");
  if (cfg.spec.obs_per_location < 5)
    throw config_error(
        "evaluation needs at least 5 observations per location so every "
        "site reaches the test set");

  std::vector<ReplicateEval> evals(
      static_cast<std::size_t>(cfg.spec.replicates));
  std::mutex log_mutex;
  parallel_for(
      cfg.spec.replicates,
      [&](int i) {
        evals[static_cast<std::size_t>(i)] =
            evaluate_replicate(cfg.spec, i + 1, cfg.variants, cfg.train,
                               cfg.tau_grid, cfg.train_fraction);
        if (log) {
          std::lock_guard<std::mutex> lock(log_mutex);
          *log << "replicate " << (i + 1) << "/" << cfg.spec.replicates
               << " done\n";
        }
      },
      cfg.threads);

  // The location list is the generating site grid; evaluation preserves
  // its order because rows are emitted location-major.
  const std::vector<Point> sites = make_site_grid(cfg.spec.grid_side);
  return aggregate(std::move(evals), static_cast<int>(cfg.spec.scenario),
                   cfg.tau_grid, sites);
}

}  // namespace csqr
