#include "csqr/quantile_engine.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "csqr/common.hpp"

namespace csqr {

static Eigen::VectorXd features_for(const QuantileModel& model, double t,
                                    std::span<const double> x, Point s) {
  std::vector<double> buf(
      static_cast<std::size_t>(model.recipe.feature_length()));
  assemble_features(t, x, s, model.recipe, buf);
  return Eigen::Map<const Eigen::VectorXd>(
      buf.data(), model.recipe.feature_length());
}

Eigen::VectorXd mixture_weights(const QuantileModel& model, double t,
                                std::span<const double> x, Point s) {
  return forward(model.params, features_for(model, t, x, s));
}

double pdf(const QuantileModel& model, double t, std::span<const double> x,
           Point s, double y) {
  const double v = model.scaler.scale(y);
  if (v < 0.0 || v > 1.0) return 0.0;
  Eigen::VectorXd theta = mixture_weights(model, t, x, s);
  const int K = model.grid.basis_count;
  std::vector<double> m(K), iv(K);
  eval_all(model.grid, v, m, iv);
  double f = 0.0;
  for (int k = 0; k < K; ++k) f += theta[k] * m[k];
  return f * model.scaler.jacobian();
}

double cdf(const QuantileModel& model, double t, std::span<const double> x,
           Point s, double y) {
  const double v = model.scaler.scale(y);
  if (v <= 0.0) return 0.0;
  if (v >= 1.0) return 1.0;
  return cdf_scaled(model.grid, mixture_weights(model, t, x, s), v);
}

double cdf_scaled(const SplineGrid& grid, const Eigen::VectorXd& theta,
                  double v) {
  if (theta.size() != grid.basis_count)
    throw config_error("mixture weight length does not match basis count");
  const int K = grid.basis_count;
  std::vector<double> m(K), iv(K);
  eval_all(grid, std::clamp(v, 0.0, 1.0), m, iv);
  double F = 0.0;
  for (int k = 0; k < K; ++k) F += theta[k] * iv[k];
  return F;
}

double quantile_scaled(const SplineGrid& grid, const Eigen::VectorXd& theta,
                       double tau) {
  if (!(tau > 0.0 && tau < 1.0))
    throw std::domain_error("tau must lie in (0, 1)");
  if (theta.size() != grid.basis_count)
    throw config_error("mixture weight length does not match basis count");
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (cdf_scaled(grid, theta, mid) < tau)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

double quantile_from_theta(const QuantileModel& model,
                           const Eigen::VectorXd& theta, double tau) {
  return model.scaler.unscale(quantile_scaled(model.grid, theta, tau));
}

double quantile(const QuantileModel& model, double t,
                std::span<const double> x, Point s, double tau) {
  return quantile_from_theta(model, mixture_weights(model, t, x, s), tau);
}

}  // namespace csqr
