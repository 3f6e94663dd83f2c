#pragma once

#include <Eigen/Dense>
#include <span>

#include "csqr/density_network.hpp"

namespace csqr {

// Pointwise conditional density / distribution / quantile under a fitted
// model.  x holds the covariates in dataset column order, s is the raw
// (unscaled) site.  All throw config_error on dimension mismatch and
// domain_error for tau outside (0,1).

double pdf(const QuantileModel& model, double t, std::span<const double> x,
           Point s, double y);
double cdf(const QuantileModel& model, double t, std::span<const double> x,
           Point s, double y);
double quantile(const QuantileModel& model, double t,
                std::span<const double> x, Point s, double tau);

// Mixture-weight vector for one feature configuration; lets callers reuse
// one forward pass across many tau values.
Eigen::VectorXd mixture_weights(const QuantileModel& model, double t,
                                std::span<const double> x, Point s);

// CDF of the scaled response given fixed mixture weights.
double cdf_scaled(const SplineGrid& grid, const Eigen::VectorXd& theta,
                  double v);
// Inverse of cdf_scaled by bisection on [0,1]: 60 halvings, keeping the
// invariant F(lo) < tau <= F(hi), so the result is monotone in tau.
double quantile_scaled(const SplineGrid& grid, const Eigen::VectorXd& theta,
                       double tau);
// quantile_scaled mapped back to original response units.
double quantile_from_theta(const QuantileModel& model,
                           const Eigen::VectorXd& theta, double tau);

}  // namespace csqr
