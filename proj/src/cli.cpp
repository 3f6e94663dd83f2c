#include "csqr/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <set>
#include <string>
#include <vector>

#include "csqr/causal_sqte.hpp"
#include "csqr/eval_harness.hpp"
#include "csqr/model_io.hpp"
#include "csqr/report.hpp"
#include "csqr/sim_gen.hpp"

namespace csqr {
namespace {

using nlohmann::json;

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw data_error("failed writing '" + path + "'");
}

// Sidecar manifest: everything needed to reproduce the output (flags and
// realized quantities); deliberately no timestamps so reruns are
// byte-identical.
void write_manifest(const std::string& out_path, json j) {
  j["artifact"] = kModelFormatTag;
  write_text_file(out_path + ".manifest.json", j.dump(2) + "\n");
}

struct SimulateArgs {
  int scenario = 1;
  int grid = 20;
  int n = 1000;
  int rep = 1;
  std::uint64_t seed = 0;
  bool with_oracle = false;
  std::string out;
};

int run_simulate(const SimulateArgs& a) {
  ScenarioSpec spec;
  spec.scenario = scenario_from_int(a.scenario);
  spec.grid_side = a.grid;
  spec.obs_per_location = a.n;
  spec.replicates = a.rep;
  spec.seed = a.seed;
  GenStats stats;
  const Dataset data = generate_replicate(spec, a.rep, &stats);
  write_dataset_csv(a.out, data, a.with_oracle);
  if (stats.monotone_violations > 0)
    std::cerr << "note: " << stats.monotone_violations << "/" << stats.rows
              << " rows fail the 99-point tau-grid monotonicity check\n";
  json j{{"command", "simulate"},
         {"scenario", a.scenario},
         {"grid", a.grid},
         {"n", a.n},
         {"rep", a.rep},
         {"seed", a.seed},
         {"with_oracle", a.with_oracle},
         {"rows", stats.rows},
         {"monotone_violations", stats.monotone_violations},
         {"treated_fraction", stats.treated_fraction},
         {"y_min", stats.y_min},
         {"y_max", stats.y_max},
         {"gp_jitter", stats.jitter_used}};
  write_manifest(a.out, j);
  std::cout << "wrote " << a.out << ": " << stats.rows << " rows\n";
  return 0;
}

struct FitArgs {
  std::string data;
  int model = 1;
  int epochs = 200;
  double lr = 1e-3;
  double lr_decay = 1.0;
  double weight_decay = 0.0;
  int batch = 256;
  int basis = 10;
  std::vector<int> hidden = {32, 32};
  std::uint64_t seed = 0;
  bool adjust = false;
  double coverage = 0.2;
  int min_rows = 50;
  std::string out;
};

int run_fit(const FitArgs& a) {
  const Dataset data = read_dataset_csv(a.data);
  const ModelVariant variant = make_variant(a.model);
  TrainConfig cfg;
  cfg.hidden = a.hidden;
  cfg.basis_count = a.basis;
  cfg.learning_rate = a.lr;
  cfg.lr_decay = a.lr_decay;
  cfg.weight_decay = a.weight_decay;
  cfg.batch_size = a.batch;
  cfg.epochs = a.epochs;
  cfg.seed = a.seed;

  QuantileModel model;
  json j{{"command", "fit"},      {"data", a.data},
         {"model", a.model},      {"epochs", a.epochs},
         {"learning_rate", a.lr}, {"lr_decay", a.lr_decay},
         {"weight_decay", a.weight_decay},
         {"batch", a.batch},
         {"basis", a.basis},      {"hidden", a.hidden},
         {"seed", a.seed},        {"adjusted", a.adjust}};
  if (a.adjust) {
    AdjustmentConfig adj;
    adj.coverage = a.coverage;
    adj.min_rows = a.min_rows;
    AdjustmentInfo info;
    model = neighborhood_adjusted_fit(data, variant.recipe_config(), cfg, adj,
                                      &info);
    j["coverage"] = a.coverage;
    j["realized_radius"] = info.radius;
    j["subset_rows"] = info.subset_rows;
    j["total_rows"] = info.total_rows;
    std::cerr << "adjustment: " << info.subset_rows << "/" << info.total_rows
              << " rows within radius " << format_double(info.radius) << "\n";
  } else {
    const FeatureRecipe recipe = build_recipe(
        variant.recipe_config(), data.coord_bbox(), data.covariate_count());
    model = train(data, recipe, cfg);
  }
  save_model(model, a.out);
  j["final_nll"] = model.meta.final_nll;
  j["train_rows"] = model.meta.train_rows;
  write_manifest(a.out, j);
  std::cout << "final NLL: " << format_double(model.meta.final_nll) << "\n";
  return 0;
}

TrainConfig config_from_model(const QuantileModel& m) {
  TrainConfig cfg;
  cfg.hidden.clear();
  for (std::size_t l = 0; l + 1 < m.params.weights.size(); ++l)
    cfg.hidden.push_back(static_cast<int>(m.params.weights[l].rows()));
  cfg.basis_count = m.grid.basis_count;
  cfg.learning_rate = m.meta.learning_rate;
  cfg.batch_size = m.meta.batch_size;
  cfg.epochs = m.meta.epochs;
  cfg.seed = m.meta.seed;
  return cfg;
}

struct SqteArgs {
  std::string model;
  std::string data;
  std::vector<double> tau;
  int bootstrap = 0;
  std::uint64_t boot_seed = 1;
  std::string out;
};

int run_sqte(const SqteArgs& a) {
  const QuantileModel model = load_model(a.model);
  const Dataset data = read_dataset_csv(a.data);
  if (data.covariate_count() != model.recipe.covariate_count)
    throw data_error("model expects " +
                     std::to_string(model.recipe.covariate_count) +
                     " covariates but the data has " +
                     std::to_string(data.covariate_count()) +
                     " (incompatible feature dimensions)");
  const std::vector<double> taus =
      a.tau.empty() ? default_tau_grid() : a.tau;
  SqteSurface surface = compute_surface(model, data, taus);
  if (a.bootstrap != 0) {
    const BootstrapResult boot =
        bootstrap_ci(data, model.recipe, config_from_model(model), a.bootstrap,
                     taus, a.boot_seed);
    surface.sd = boot.sd;
    surface.average_sd = boot.avg_sd;
  }
  write_surface_csv(a.out, surface);
  json j{{"command", "sqte"},
         {"model", a.model},
         {"data", a.data},
         {"tau", taus},
         {"bootstrap", a.bootstrap},
         {"boot_seed", a.boot_seed},
         {"locations", surface.locations.size()},
         {"rows", data.size()}};
  write_manifest(a.out, j);
  std::cout << "wrote " << a.out << ": " << surface.locations.size()
            << " locations x " << taus.size() << " tau levels\n";
  return 0;
}

struct EvalArgs {
  int scenario = 1;
  int grid = 20;
  int n = 1000;
  int replicates = 100;
  std::uint64_t seed = 0;
  std::vector<int> models = {1, 2, 3, 4, 5};
  std::vector<int> adjust_models;
  std::vector<double> coverage = {0.2};
  int epochs = 200;
  double lr = 1e-3;
  double lr_decay = 1.0;
  double weight_decay = 0.0;
  int batch = 256;
  int basis = 10;
  std::vector<int> hidden = {32, 32};
  std::vector<double> tau;
  double fraction = 0.8;
  int threads = 0;
  std::string out;
  std::string svg_prefix;
};

// Shared by eval and report: emit the standalone figures from CSV rows.
void emit_svgs(const std::vector<ReportRow>& rows, const std::string& prefix,
               int replicates, double map_tau) {
  const int scenario = rows.front().scenario;
  const std::string head = "Scenario " + std::to_string(scenario);
  write_text_file(prefix + "curves_response.svg",
                  svg_curves(rows, "response_rmise", replicates,
                             head + ": response RMISE"));
  std::cout << "wrote " << prefix << "curves_response.svg\n";
  write_text_file(
      prefix + "curves_sqte.svg",
      svg_curves(rows, "sqte_rmise", replicates, head + ": SQTE RMISE"));
  std::cout << "wrote " << prefix << "curves_sqte.svg\n";

  // Nearest available tau to the requested map level (exact for grids that
  // contain it; format_double round-trips keep equality across CSV I/O).
  double best = 0.0, best_dist = 1e300;
  bool have_map = false;
  for (const ReportRow& r : rows) {
    if (!r.location) continue;
    const double d = std::abs(r.tau - map_tau);
    if (d < best_dist || (d == best_dist && r.tau < best)) {
      best = r.tau;
      best_dist = d;
      have_map = true;
    }
  }
  if (have_map) {
    const std::string suffix = " map (tau=" + format_double(best) + ")";
    write_text_file(prefix + "map_response.svg",
                    svg_map(rows, "response_rmise", best,
                            head + ": response RMISE" + suffix));
    std::cout << "wrote " << prefix << "map_response.svg\n";
    write_text_file(
        prefix + "map_sqte.svg",
        svg_map(rows, "sqte_rmise", best, head + ": SQTE RMISE" + suffix));
    std::cout << "wrote " << prefix << "map_sqte.svg\n";
  }

  std::vector<int> adjusted_ids;
  for (const ReportRow& r : rows)
    if (r.adjusted > 0.0) adjusted_ids.push_back(r.variant);
  if (!adjusted_ids.empty()) {
    std::vector<ReportRow> sweep;
    for (const ReportRow& r : rows)
      for (int id : adjusted_ids)
        if (r.variant == id) {
          sweep.push_back(r);
          break;
        }
    write_text_file(prefix + "sensitivity.svg",
                    svg_curves(sweep, "sqte_rmise", replicates,
                               head + ": SQTE RMISE by coverage"));
    std::cout << "wrote " << prefix << "sensitivity.svg\n";
  }
}

int run_eval(const EvalArgs& a) {
  StudyConfig cfg;
  cfg.spec.scenario = scenario_from_int(a.scenario);
  cfg.spec.grid_side = a.grid;
  cfg.spec.obs_per_location = a.n;
  cfg.spec.replicates = a.replicates;
  cfg.spec.seed = a.seed;
  for (int id : a.models) cfg.variants.push_back(make_variant(id));
  for (int id : a.adjust_models)
    for (double rho : a.coverage)
      cfg.variants.push_back(make_variant(id, true, rho));
  cfg.train.hidden = a.hidden;
  cfg.train.basis_count = a.basis;
  cfg.train.learning_rate = a.lr;
  cfg.train.lr_decay = a.lr_decay;
  cfg.train.weight_decay = a.weight_decay;
  cfg.train.batch_size = a.batch;
  cfg.train.epochs = a.epochs;
  cfg.train.seed = a.seed;
  if (!a.tau.empty()) cfg.tau_grid = a.tau;
  cfg.train_fraction = a.fraction;
  cfg.threads = a.threads;

  const RmiseReport report = run_study(cfg, &std::cerr);
  write_report_csv(a.out, report);
  std::vector<std::string> variant_names;
  for (const auto& v : report.variants) variant_names.push_back(v.name());
  json j{{"command", "eval"},
         {"scenario", a.scenario},
         {"grid", a.grid},
         {"n", a.n},
         {"replicates", a.replicates},
         {"seed", a.seed},
         {"variants", variant_names},
         {"epochs", a.epochs},
         {"learning_rate", a.lr},
         {"lr_decay", a.lr_decay},
         {"weight_decay", a.weight_decay},
         {"batch", a.batch},
         {"basis", a.basis},
         {"hidden", a.hidden},
         {"tau", cfg.tau_grid},
         {"fraction", a.fraction}};
  write_manifest(a.out, j);
  std::cout << "wrote " << a.out << "\n";
  if (!a.svg_prefix.empty())
    emit_svgs(report_rows(report), a.svg_prefix, report.replicates, 0.05);
  return 0;
}

struct ReportArgs {
  std::string input;
  std::string out_prefix;
  int replicates = 0;  // 0: sidecar manifest, else 1
  double map_tau = 0.05;
};

int run_report(const ReportArgs& a) {
  const std::vector<ReportRow> rows = read_report_csv(a.input);
  int replicates = a.replicates;
  if (replicates <= 0) {
    replicates = 1;
    std::ifstream manifest(a.input + ".manifest.json", std::ios::binary);
    if (manifest) {
      try {
        json j = json::parse(manifest);
        if (j.contains("replicates")) replicates = j["replicates"].get<int>();
      } catch (const json::exception&) {
        // Unusable sidecar; keep the default.
      }
    }
  }
  emit_svgs(rows, a.out_prefix, replicates, a.map_tau);
  return 0;
}

std::string trimmed(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// CLI11 only honors set_config on the root app, so each subcommand's
// --config is expanded into ordinary flags before parsing. Keys already
// given on the command line keep precedence: their config entries are
// dropped.
std::vector<std::string> expand_config_args(const CLI::App& app,
                                            std::vector<std::string> args) {
  if (args.empty() || args.front().empty() || args.front().front() == '-')
    return args;
  const CLI::App* sub = app.get_subcommand_no_throw(args.front());
  if (sub == nullptr) return args;

  std::string path;
  std::set<std::string> given;
  for (std::size_t i = 1; i < args.size(); ++i) {
    const std::string& t = args[i];
    if (t.rfind("--", 0) != 0) continue;
    const std::string name = t.substr(0, t.find('='));
    given.insert(name);
    if (name != "--config") continue;
    if (t.size() > name.size())
      path = t.substr(name.size() + 1);
    else if (i + 1 < args.size())
      path = args[i + 1];
  }
  if (path.empty()) return args;

  std::ifstream in(path);
  if (!in) throw config_error("cannot read config file '" + path + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trimmed(line);
    if (line.empty() || line.front() == '#') continue;
    const auto where = "config file '" + path + "' line " +
                       std::to_string(lineno);
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0)
      throw config_error(where + " is not key=value");
    const std::string key = trimmed(line.substr(0, eq));
    std::string value = trimmed(line.substr(eq + 1));
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') &&
        value.back() == value.front())
      value = value.substr(1, value.size() - 2);
    if (key == "config")
      throw config_error(where + ": config files cannot nest");
    const CLI::Option* op = sub->get_option_no_throw("--" + key);
    if (op == nullptr)
      throw config_error(where + " sets unknown option '" + key + "'");
    if (given.count("--" + key) > 0) continue;
    if (op->get_expected_min() == 0) {
      if (value == "true" || value == "1")
        args.push_back("--" + key);
      else if (value != "false" && value != "0")
        throw config_error(where + ": flag '" + key + "' must be true/false");
    } else {
      args.push_back("--" + key);
      args.push_back(value);
    }
  }
  return args;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{
      "csqr: spatial quantile regression with spline mixtures, causal "
      "SQTE estimation, and a simulation/evaluation harness"};
  app.require_subcommand(1);

  SimulateArgs sim;
  CLI::App* c_sim = app.add_subcommand(
      "simulate", "Generate one simulated replicate as CSV");
  c_sim->add_option("--config")->description(
      "Flat key=value config file (flags take precedence)");
  c_sim->add_option("--scenario", sim.scenario,
                    "Scenario: 1 unconfounded, 2 observed, 3 hidden")
      ->required();
  c_sim->add_option("--grid", sim.grid, "Sites per axis (default 20)");
  c_sim->add_option("--n", sim.n, "Observations per location (default 1000)");
  c_sim->add_option("--rep", sim.rep, "Replicate index (default 1)");
  c_sim->add_option("--seed", sim.seed, "Master seed (default 0)");
  c_sim->add_flag("--with-oracle", sim.with_oracle,
                  "Include rep/h1..h3/u oracle columns");
  c_sim->add_option("--out", sim.out, "Output CSV path")->required();

  FitArgs fit;
  CLI::App* c_fit =
      app.add_subcommand("fit", "Fit a quantile model on a CSV dataset");
  c_fit->add_option("--config")->description(
      "Flat key=value config file (flags take precedence)");
  c_fit->add_option("--data", fit.data, "Input CSV")->required();
  c_fit->add_option("--model", fit.model,
                    "Variant 1..5: covariates / +coordinates / +features at "
                    "1..3 resolutions");
  c_fit->add_option("--epochs", fit.epochs, "Training epochs (default 200)");
  c_fit->add_option("--lr", fit.lr, "Learning rate (default 1e-3)");
  c_fit->add_option("--lr-decay", fit.lr_decay,
                    "Per-epoch learning-rate decay in (0,1] (default 1)");
  c_fit->add_option("--weight-decay", fit.weight_decay,
                    "Decoupled weight decay, >= 0 (default 0)");
  c_fit->add_option("--batch", fit.batch, "Mini-batch size (default 256)");
  c_fit->add_option("--basis", fit.basis, "Spline basis count K (default 10)");
  c_fit->add_option("--hidden", fit.hidden,
                    "Hidden layer widths (default 32,32)")
      ->delimiter(',');
  c_fit->add_option("--seed", fit.seed, "Training seed (default 0)");
  c_fit->add_flag("--adjust", fit.adjust,
                  "Neighborhood spatial-confounding adjustment");
  c_fit->add_option("--coverage", fit.coverage,
                    "Adjustment coverage rho in (0,1] (default 0.2)");
  c_fit->add_option("--min-rows", fit.min_rows,
                    "Minimum adjusted subset size (default 50)");
  c_fit->add_option("--out", fit.out, "Output model path")->required();

  SqteArgs sqte;
  CLI::App* c_sqte = app.add_subcommand(
      "sqte", "Estimate the SQTE surface under a fitted model");
  c_sqte->add_option("--config")->description(
      "Flat key=value config file (flags take precedence)");
  c_sqte->add_option("--model", sqte.model, "Model file")->required();
  c_sqte->add_option("--data", sqte.data, "Input CSV")->required();
  c_sqte->add_option("--tau", sqte.tau,
                     "Quantile levels (default 0.05..0.95 step 0.05)")
      ->delimiter(',');
  c_sqte->add_option("--bootstrap", sqte.bootstrap,
                     "Bootstrap replicates for sd columns (default off)");
  c_sqte->add_option("--boot-seed", sqte.boot_seed,
                     "Bootstrap resampling seed (default 1)");
  c_sqte->add_option("--out", sqte.out, "Output CSV path")->required();

  EvalArgs eval;
  CLI::App* c_eval = app.add_subcommand(
      "eval", "Simulation study: RMISE report over replicates");
  c_eval->add_option("--config")->description(
      "Flat key=value config file (flags take precedence)");
  c_eval->add_option("--scenario", eval.scenario, "Scenario 1..3")->required();
  c_eval->add_option("--grid", eval.grid, "Sites per axis (default 20)");
  c_eval->add_option("--n", eval.n,
                     "Observations per location (default 1000)");
  c_eval->add_option("--replicates", eval.replicates,
                     "Simulation replicates (default 100)");
  c_eval->add_option("--seed", eval.seed, "Master seed (default 0)");
  c_eval->add_option("--models", eval.models,
                     "Model variants to fit (default 1,2,3,4,5)")
      ->delimiter(',');
  c_eval->add_option("--adjust-models", eval.adjust_models,
                     "Variants additionally fitted with adjustment")
      ->delimiter(',');
  c_eval->add_option("--coverage", eval.coverage,
                     "Adjustment coverage values (default 0.2)")
      ->delimiter(',');
  c_eval->add_option("--epochs", eval.epochs, "Training epochs (default 200)");
  c_eval->add_option("--lr", eval.lr, "Learning rate (default 1e-3)");
  c_eval->add_option("--lr-decay", eval.lr_decay,
                     "Per-epoch learning-rate decay in (0,1] (default 1)");
  c_eval->add_option("--weight-decay", eval.weight_decay,
                     "Decoupled weight decay, >= 0 (default 0)");
  c_eval->add_option("--batch", eval.batch, "Mini-batch size (default 256)");
  c_eval->add_option("--basis", eval.basis,
                     "Spline basis count K (default 10)");
  c_eval->add_option("--hidden", eval.hidden,
                     "Hidden layer widths (default 32,32)")
      ->delimiter(',');
  c_eval->add_option("--tau", eval.tau,
                     "Quantile levels (default 0.05..0.95 step 0.05)")
      ->delimiter(',');
  c_eval->add_option("--fraction", eval.fraction,
                     "Training fraction (default 0.8)");
  c_eval->add_option("--threads", eval.threads,
                     "Worker threads (default: hardware)");
  c_eval->add_option("--out", eval.out, "Output report CSV")->required();
  c_eval->add_option("--svg-prefix", eval.svg_prefix,
                     "Also emit SVG figures under this path prefix");

  ReportArgs rep;
  CLI::App* c_rep = app.add_subcommand(
      "report", "Re-emit SVG figures from a report CSV");
  c_rep->add_option("--config")->description(
      "Flat key=value config file (flags take precedence)");
  c_rep->add_option("--input", rep.input, "Report CSV")->required();
  c_rep->add_option("--out-prefix", rep.out_prefix, "Output path prefix")
      ->required();
  c_rep->add_option("--replicates", rep.replicates,
                    "Replicate count behind the CSV (default: sidecar "
                    "manifest, else 1)");
  c_rep->add_option("--map-tau", rep.map_tau,
                    "Quantile level for the maps (default 0.05)");

  if (argc > 0) app.name(argv[0]);
  std::vector<std::string> args;
  args.reserve(argc > 0 ? static_cast<std::size_t>(argc - 1) : 0);
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  try {
    args = expand_config_args(app, std::move(args));
    std::reverse(args.begin(), args.end());  // App::parse takes reversed args
    app.parse(std::move(args));
  } catch (const config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return 2;
  }

  try {
    if (app.got_subcommand(c_sim)) return run_simulate(sim);
    if (app.got_subcommand(c_fit)) return run_fit(fit);
    if (app.got_subcommand(c_sqte)) return run_sqte(sqte);
    if (app.got_subcommand(c_eval)) return run_eval(eval);
    if (app.got_subcommand(c_rep)) return run_report(rep);
    std::cerr << "error: no subcommand\n";
    return 2;
  } catch (const config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const diverged_error& e) {
    std::cerr << "error: training diverged at epoch " << e.epoch() << ": "
              << e.what() << "\n";
    return 4;
  } catch (const numeric_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const data_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace csqr
