#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "csqr/common.hpp"
#include "csqr/density_network.hpp"
#include "csqr/quantile_engine.hpp"
#include "csqr/spline_basis.hpp"

using namespace csqr;

namespace {

QuantileModel make_model(int K, std::uint64_t seed) {
  QuantileModel m;
  m.grid = build_grid(K);
  m.recipe = build_recipe({{}, false, {}}, BBox{}, 1);
  m.scaler = ResponseScaler{-2.0, 3.0, 0.01};
  m.params = glorot_init(m.recipe.feature_length(), {8}, K, seed);
  return m;
}

template <typename F>
double simpson(F f, double a, double b, int panels) {
  const double h = (b - a) / panels;
  double acc = f(a) + f(b);
  for (int i = 1; i < panels; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return acc * h / 3.0;
}

// Independent inversion of a single I-spline by long bisection.
double invert_i(const SplineGrid& g, int k, double tau) {
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (eval_i(g, k, mid) < tau)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("uniform K=2 mixture gives uniform pdf, linear cdf, affine quantiles") {
  QuantileModel m = make_model(2, 0);
  m.params = zero_params(m.recipe.feature_length(), {8}, 2);
  const std::vector<double> x{0.4};
  const Point s{0.5, 0.5};
  const double jac = m.scaler.jacobian();
  for (double y : {-1.5, 0.0, 1.0, 2.5}) {
    CHECK(pdf(m, 1.0, x, s, y) == doctest::Approx(jac).epsilon(1e-12));
    CHECK(cdf(m, 1.0, x, s, y) ==
          doctest::Approx(m.scaler.scale(y)).epsilon(1e-12));
  }
  for (double tau : {0.1, 0.5, 0.9})
    CHECK(quantile(m, 0.0, x, s, tau) ==
          doctest::Approx(m.scaler.unscale(tau)).epsilon(1e-9));
}

TEST_CASE("pdf vanishes outside the support, cdf saturates") {
  const QuantileModel m = make_model(8, 5);
  const std::vector<double> x{0.1};
  const Point s{0.0, 0.0};
  const double lo = m.scaler.unscale(0.0);
  const double hi = m.scaler.unscale(1.0);
  CHECK(pdf(m, 1.0, x, s, lo - 1e-9) == 0.0);
  CHECK(pdf(m, 1.0, x, s, hi + 1e-9) == 0.0);
  CHECK(pdf(m, 1.0, x, s, -100.0) == 0.0);
  // The unscale/scale round trip can land one ulp inside the support.
  CHECK(cdf(m, 1.0, x, s, lo) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(cdf(m, 1.0, x, s, hi) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cdf(m, 1.0, x, s, lo - 1e-12) == 0.0);
  CHECK(cdf(m, 1.0, x, s, hi + 1e-12) == 1.0);
  CHECK(cdf(m, 1.0, x, s, -100.0) == 0.0);
  CHECK(cdf(m, 1.0, x, s, 100.0) == 1.0);
}

TEST_CASE("pdf integrates to one over the support") {
  const QuantileModel m = make_model(10, 11);
  const std::vector<double> x{-0.6};
  const Point s{0.3, 0.8};
  const double lo = m.scaler.unscale(0.0);
  const double hi = m.scaler.unscale(1.0);
  const double mass = simpson(
      [&](double y) { return pdf(m, 1.0, x, s, y); }, lo, hi, 40000);
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("cdf equals the integral of the pdf") {
  const QuantileModel m = make_model(10, 13);
  const std::vector<double> x{0.9};
  const Point s{0.3, 0.8};
  const double lo = m.scaler.unscale(0.0);
  for (double v : {0.2, 0.5, 0.87}) {
    const double y0 = m.scaler.unscale(v);
    const double integral = simpson(
        [&](double y) { return pdf(m, 0.0, x, s, y); }, lo, y0, 40000);
    CHECK(cdf(m, 0.0, x, s, y0) == doctest::Approx(integral).epsilon(1e-6));
  }
}

TEST_CASE("pdf is the central-difference derivative of the cdf") {
  const QuantileModel m = make_model(7, 17);
  const std::vector<double> x{0.33};
  const Point s{0.1, 0.9};
  const double h = 1e-4;
  // The cdf is piecewise quadratic in y, so away from knots the central
  // difference is exact up to roundoff.
  for (double v : {0.11, 0.37, 0.52, 0.81}) {
    const double y0 = m.scaler.unscale(v);
    const double fd =
        (cdf(m, 1.0, x, s, y0 + h) - cdf(m, 1.0, x, s, y0 - h)) / (2 * h);
    CHECK(pdf(m, 1.0, x, s, y0) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("one-hot mixtures invert the corresponding I-spline") {
  const SplineGrid g = build_grid(9);
  for (int k = 1; k <= 9; k += 2) {
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(9);
    theta[k - 1] = 1.0;
    for (double tau : {0.05, 0.3, 0.5, 0.77, 0.95}) {
      const double got = quantile_scaled(g, theta, tau);
      const double want = invert_i(g, k, tau);
      CHECK(got == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("quantiles never cross and round-trip through the cdf") {
  for (std::uint64_t seed : {101u, 202u, 303u}) {
    const QuantileModel m = make_model(10, seed);
    Rng rng(seed + 9);
    const double t = rng.bernoulli(0.5);
    const std::vector<double> x{rng.uniform(-1, 1)};
    const Point s{rng.uniform(), rng.uniform()};
    double prev = -std::numeric_limits<double>::infinity();
    for (int i = 1; i <= 99; ++i) {
      const double tau = i / 100.0;
      const double q = quantile(m, t, x, s, tau);
      CHECK(q >= prev);
      prev = q;
      CHECK(cdf(m, t, x, s, q) == doctest::Approx(tau).epsilon(1e-8));
      CHECK(std::abs(cdf(m, t, x, s, q) - tau) <= 1e-8);
    }
  }
}

TEST_CASE("quantile_from_theta is unscale of the scaled quantile") {
  const QuantileModel m = make_model(6, 23);
  const Eigen::VectorXd theta =
      mixture_weights(m, 1.0, std::vector<double>{0.2}, {0.4, 0.6});
  for (double tau : {0.1, 0.5, 0.9})
    CHECK(quantile_from_theta(m, theta, tau) ==
          m.scaler.unscale(quantile_scaled(m.grid, theta, tau)));
}

TEST_CASE("mixture_weights agrees with forward on assembled features") {
  const QuantileModel m = make_model(5, 29);
  const std::vector<double> x{0.7};
  const Point s{0.25, 0.75};
  std::vector<double> buf(static_cast<std::size_t>(m.recipe.feature_length()));
  assemble_features(1.0, x, s, m.recipe, buf);
  const Eigen::VectorXd direct = forward(
      m.params, Eigen::Map<const Eigen::VectorXd>(
                    buf.data(), static_cast<Eigen::Index>(buf.size())));
  const Eigen::VectorXd via = mixture_weights(m, 1.0, x, s);
  CHECK((direct - via).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("invalid tau and mismatched weights are rejected") {
  const QuantileModel m = make_model(5, 31);
  const std::vector<double> x{0.0};
  const Point s{0.5, 0.5};
  for (double tau : {0.0, 1.0, -0.5, 1.5}) {
    CHECK_THROWS_AS(quantile(m, 1.0, x, s, tau), std::domain_error);
    CHECK_THROWS_AS(quantile_scaled(m.grid, Eigen::VectorXd::Ones(5) / 5.0, tau),
                    std::domain_error);
  }
  CHECK_THROWS_AS(cdf_scaled(m.grid, Eigen::VectorXd::Ones(4) / 4.0, 0.5),
                  config_error);
  CHECK_THROWS_AS(quantile_scaled(m.grid, Eigen::VectorXd::Ones(4) / 4.0, 0.5),
                  config_error);
}
