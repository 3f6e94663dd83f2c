#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "csqr/common.hpp"
#include "csqr/dataset.hpp"

namespace csqr {

// The three generating scenarios: treatment unconfounded, confounded by
// observed covariates, confounded by hidden spatial variables.
enum class Scenario { unconfounded = 1, observed = 2, hidden = 3 };

Scenario scenario_from_int(int id);

struct ScenarioSpec {
  Scenario scenario = Scenario::unconfounded;
  int grid_side = 20;         // sites per axis; n_s = side^2
  int obs_per_location = 1000;  // n
  int replicates = 100;       // N
  std::uint64_t seed = 0;

  void validate() const;
  int site_count() const { return grid_side * grid_side; }
};

// Squared-exponential covariance exp{-(h/range)^2} plus a diagonal jitter.
struct GpSpec {
  double range = 0.0;
  double jitter = 1e-8;
};

double sq_exp_cov(double h, double range);

// Holds the Cholesky factor of the jittered covariance over a fixed site
// set; draw() realizes one zero-mean field.  The jitter escalates by
// factors of 10 up to 1e-4 before a numeric_error is raised.
class GpSampler {
 public:
  GpSampler(std::span<const Point> sites, const GpSpec& spec);

  Eigen::VectorXd draw(Rng& rng) const;
  const Eigen::MatrixXd& factor() const { return chol_; }
  double jitter_used() const { return jitter_used_; }

 private:
  Eigen::MatrixXd chol_;
  double jitter_used_ = 0.0;
};

// Regular side x side grid over the closed unit square, row-major with the
// first coordinate varying fastest.
std::vector<Point> make_site_grid(int side);

// Per-replicate generation diagnostics.  The composite quantile expression
// is not globally monotone in tau for every covariate draw; rows failing a
// 99-point grid check are counted here rather than rejected.
struct GenStats {
  std::size_t rows = 0;
  std::size_t monotone_violations = 0;
  double treated_fraction = 0.0;
  double y_min = 0.0;
  double y_max = 0.0;
  double jitter_used = 0.0;
};

// Deterministic function of (spec, replicate_index); replicate_index is
// 1-based.  Rows are emitted location-major (all n observations of site 1,
// then site 2, ...), with oracle columns filled.
Dataset generate_replicate(const ScenarioSpec& spec, int replicate_index,
                           GenStats* stats = nullptr);

// Residual quantile q_eps(tau | s) = sin(2*pi*s1) + cos(3*pi*s2) + PHI^-1(tau).
double residual_quantile(double tau, Point s);

// Full conditional quantile of the response; x spans x1..x6, hidden spans
// h1..h3 (ignored outside the hidden-confounder scenario).
double true_quantile(Scenario sc, double tau, double t,
                     std::span<const double> x, std::span<const double> hidden,
                     Point s);

// Delta(tau, s) = 2 s1 (tau - 1/2)^2, identical across scenarios.
double true_sqte(double tau, Point s);

// Treatment probability under each scenario: 0.5 / expit(x1+x6) / expit(5 h3).
double treatment_probability(Scenario sc, std::span<const double> x,
                             std::span<const double> hidden);

}  // namespace csqr
