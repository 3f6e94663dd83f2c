#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "csqr/common.hpp"
#include "csqr/density_network.hpp"
#include "csqr/model_io.hpp"
#include "csqr/quantile_engine.hpp"
#include "csqr/spline_basis.hpp"

using namespace csqr;

namespace {

QuantileModel toy_model(int covariates, const std::vector<int>& hidden, int K,
                        std::uint64_t seed) {
  QuantileModel m;
  m.grid = build_grid(K);
  m.recipe = build_recipe({{}, false, {}}, BBox{}, covariates);
  m.scaler = ResponseScaler{0.0, 1.0, 0.01};
  m.params = glorot_init(m.recipe.feature_length(), hidden, K, seed);
  return m;
}

Batch random_batch(int features, int rows, std::uint64_t seed) {
  Rng rng(seed);
  Batch b;
  b.features.resize(features, rows);
  b.y.resize(rows);
  for (int j = 0; j < rows; ++j) {
    for (int i = 0; i < features; ++i) b.features(i, j) = rng.uniform(-1, 1);
    b.y[j] = rng.uniform(0.1, 0.9);
  }
  return b;
}

// Dataset with features [t, x1] and a treatment-shifted Gaussian response.
Dataset gaussian_toy(int n, double shift, double sd, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  d.covariate_names = {"x1"};
  d.x.resize(1);
  for (int i = 0; i < n; ++i) {
    const double t = rng.bernoulli(0.5);
    d.t.push_back(t);
    d.x[0].push_back(rng.uniform(0, 1));
    d.y.push_back(shift * t + sd * rng.normal());
    d.lon.push_back(0.0);
    d.lat.push_back(0.0);
  }
  return d;
}

}  // namespace

TEST_CASE("forward of all-zero parameters is the uniform simplex") {
  const NetworkParams p = zero_params(3, {4}, 5);
  const Eigen::VectorXd theta = forward(p, Eigen::VectorXd::Ones(3));
  REQUIRE(theta.size() == 5);
  for (int k = 0; k < 5; ++k) CHECK(theta[k] == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("forward is invariant to constant shifts of the output layer") {
  NetworkParams p = glorot_init(4, {6}, 5, 99);
  Eigen::VectorXd x(4);
  x << 0.3, -0.7, 1.1, 0.0;
  const Eigen::VectorXd base = forward(p, x);
  p.biases.back().array() += 123.456;
  const Eigen::VectorXd shifted = forward(p, x);
  for (int k = 0; k < 5; ++k)
    CHECK(shifted[k] == doctest::Approx(base[k]).epsilon(1e-12));
}

TEST_CASE("forward matches a naive exp/normalize softmax oracle") {
  const NetworkParams p = glorot_init(4, {6}, 5, 7);
  Eigen::VectorXd x(4);
  x << 0.5, -0.25, 0.8, -1.0;
  // Recompute the forward pass by hand.
  Eigen::VectorXd a = (p.weights[0] * x + p.biases[0]).cwiseMax(0.0);
  Eigen::VectorXd z = p.weights[1] * a + p.biases[1];
  Eigen::VectorXd e = z.array().exp();  // deliberately unstabilized
  Eigen::VectorXd oracle = e / e.sum();
  const Eigen::VectorXd theta = forward(p, x);
  double sum = 0.0;
  for (int k = 0; k < 5; ++k) {
    CHECK(theta[k] == doctest::Approx(oracle[k]).epsilon(1e-12));
    CHECK(theta[k] >= 0.0);
    sum += theta[k];
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("forward validates dimensions and finiteness") {
  const NetworkParams p = glorot_init(4, {6}, 5, 7);
  CHECK_THROWS_AS(forward(p, Eigen::VectorXd::Ones(3)), config_error);
  Eigen::VectorXd bad = Eigen::VectorXd::Ones(4);
  bad[2] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(forward(p, bad), numeric_error);
}

TEST_CASE("forward_batch equals per-column forward") {
  const NetworkParams p = glorot_init(3, {5, 4}, 6, 21);
  Eigen::MatrixXd X(3, 7);
  Rng rng(22);
  for (int j = 0; j < 7; ++j)
    for (int i = 0; i < 3; ++i) X(i, j) = rng.uniform(-2, 2);
  const Eigen::MatrixXd theta = forward_batch(p, X);
  for (int j = 0; j < 7; ++j) {
    const Eigen::VectorXd col = forward(p, X.col(j));
    for (int k = 0; k < 6; ++k)
      CHECK(theta(k, j) == doctest::Approx(col[k]).epsilon(1e-14));
  }
}

TEST_CASE("fit_scaler maps the observed range onto the margins") {
  const std::vector<double> y{3.0, -1.0, 7.0};
  const ResponseScaler s = fit_scaler(y);
  CHECK(s.y_min == -1.0);
  CHECK(s.y_max == 7.0);
  CHECK(s.scale(-1.0) == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(s.scale(7.0) == doctest::Approx(0.99).epsilon(1e-15));
  CHECK(s.unscale(s.scale(3.0)) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(s.jacobian() == doctest::Approx(0.98 / 8.0).epsilon(1e-15));
  CHECK_THROWS_AS(fit_scaler(std::vector<double>{}), data_error);
  CHECK_THROWS_AS(fit_scaler(std::vector<double>{2.0, 2.0}), data_error);
}

TEST_CASE("nll is zero for the uniform K=2 mixture") {
  // With K=2 the uniform mixture is the uniform density, so log f = 0
  // wherever the response is strictly inside the support.
  QuantileModel m = toy_model(1, {3}, 2, 0);
  m.params = zero_params(m.recipe.feature_length(), {3}, 2);
  Batch b;
  b.features = Eigen::MatrixXd::Zero(2, 3);
  b.y.resize(3);
  b.y << 0.2, 0.5, 0.9;
  CHECK(nll(m, b) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("nll of a near-one-hot mixture is -log M_k") {
  QuantileModel m = toy_model(1, {3}, 5, 3);
  m.params = zero_params(m.recipe.feature_length(), {3}, 5);
  m.params.biases.back()[2] = 60.0;  // theta ~ one-hot on basis 3
  Batch b;
  b.features = Eigen::MatrixXd::Zero(2, 1);
  b.y.resize(1);
  b.y[0] = 0.47;
  const double expected = -std::log(eval_m(m.grid, 3, m.scaler.scale(0.47)));
  CHECK(nll(m, b) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("nll matches the per-row oracle on a random batch") {
  const QuantileModel m = toy_model(3, {6}, 5, 11);
  const Batch b = random_batch(m.recipe.feature_length(), 10, 12);
  double acc = 0.0;
  std::vector<double> mv(5), iv(5);
  for (int j = 0; j < 10; ++j) {
    const Eigen::VectorXd theta = forward(m.params, b.features.col(j));
    eval_all(m.grid, m.scaler.scale(b.y[j]), mv, iv);
    double f = 0.0;
    for (int k = 0; k < 5; ++k) f += theta[k] * mv[k];
    acc += -std::log(f + 1e-12);
  }
  CHECK(nll(m, b) == doctest::Approx(acc / 10.0).epsilon(1e-12));
}

TEST_CASE("nll rejects empty batches and counts clamped rows") {
  const QuantileModel m = toy_model(1, {3}, 4, 5);
  Batch empty;
  empty.features.resize(m.recipe.feature_length(), 0);
  empty.y.resize(0);
  CHECK_THROWS_AS(nll(m, empty), data_error);

  Batch b;
  b.features = Eigen::MatrixXd::Zero(m.recipe.feature_length(), 3);
  b.y.resize(3);
  b.y << 0.5, 1.5, -0.2;  // scaler range is [0,1]
  int clamped = 0;
  nll(m, b, &clamped);
  CHECK(clamped == 2);
}

TEST_CASE("gradient of a batch of identical rows equals the single-row gradient") {
  const QuantileModel m = toy_model(2, {4}, 4, 31);
  Batch one = random_batch(m.recipe.feature_length(), 1, 32);
  Batch rep;
  rep.features.resize(m.recipe.feature_length(), 8);
  rep.y.resize(8);
  for (int j = 0; j < 8; ++j) {
    rep.features.col(j) = one.features.col(0);
    rep.y[j] = one.y[0];
  }
  const NetworkParams g1 = grad_nll(m, one);
  const NetworkParams g8 = grad_nll(m, rep);
  for (std::size_t l = 0; l < g1.weights.size(); ++l) {
    CHECK((g1.weights[l] - g8.weights[l]).lpNorm<Eigen::Infinity>() < 1e-14);
    CHECK((g1.biases[l] - g8.biases[l]).lpNorm<Eigen::Infinity>() < 1e-14);
  }
}

TEST_CASE("analytic gradient matches central finite differences") {
  QuantileModel m = toy_model(3, {6}, 5, 41);  // 4 input features
  const Batch b = random_batch(m.recipe.feature_length(), 8, 42);
  const NetworkParams g = grad_nll(m, b);
  const double h = 1e-5;
  auto fd_check = [&](double& slot, double analytic) {
    const double saved = slot;
    slot = saved + h;
    const double up = nll(m, b);
    slot = saved - h;
    const double down = nll(m, b);
    slot = saved;
    const double fd = (up - down) / (2 * h);
    const double rel =
        std::abs(analytic - fd) / std::max({std::abs(fd), std::abs(analytic), 1e-4});
    CHECK(rel < 1e-5);
  };
  for (std::size_t l = 0; l < m.params.weights.size(); ++l) {
    for (Eigen::Index r = 0; r < m.params.weights[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < m.params.weights[l].cols(); ++c)
        fd_check(m.params.weights[l](r, c), g.weights[l](r, c));
      fd_check(m.params.biases[l][r], g.biases[l][r]);
    }
  }
}

TEST_CASE("last-layer bias gradient sums to zero across the softmax") {
  // Sum_k theta_k (M_k - f) = f - f = 0, so the softmax head's bias
  // gradient always sums to zero over k, per sample and hence per batch.
  const QuantileModel m = toy_model(3, {6}, 5, 51);
  const Batch b = random_batch(m.recipe.feature_length(), 8, 52);
  const NetworkParams g = grad_nll(m, b);
  CHECK(g.biases.back().sum() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::abs(g.biases.back().sum()) < 1e-12);
}

TEST_CASE("train with zero epochs returns the initialized model") {
  const Dataset d = gaussian_toy(100, 1.0, 0.25, 61);
  const FeatureRecipe recipe = build_recipe({{}, false, {}}, d.coord_bbox(), 1);
  TrainConfig cfg;
  cfg.hidden = {4};
  cfg.basis_count = 5;
  cfg.epochs = 0;
  cfg.seed = 9;
  const QuantileModel m = train(d, recipe, cfg);
  const NetworkParams init =
      glorot_init(recipe.feature_length(), {4}, 5, derive_seed(9, 0x1717));
  for (std::size_t l = 0; l < init.weights.size(); ++l)
    CHECK(m.params.weights[l] == init.weights[l]);
  // final_nll records the untouched initial loss.
  Batch full;
  full.features = build_feature_matrix(d, recipe);
  full.y = Eigen::Map<const Eigen::VectorXd>(d.y.data(),
                                             static_cast<Eigen::Index>(d.size()));
  CHECK(m.meta.final_nll == nll(m, full));
  CHECK(m.meta.epochs == 0);
  CHECK(m.meta.train_rows == 100);
}

TEST_CASE("training is bit-reproducible per seed") {
  const Dataset d = gaussian_toy(150, 1.0, 0.25, 71);
  const FeatureRecipe recipe = build_recipe({{}, false, {}}, d.coord_bbox(), 1);
  TrainConfig cfg;
  cfg.hidden = {6};
  cfg.basis_count = 6;
  cfg.epochs = 5;
  cfg.seed = 1234;
  const QuantileModel a = train(d, recipe, cfg);
  const QuantileModel b = train(d, recipe, cfg);
  CHECK(serialize_model(a) == serialize_model(b));
  cfg.seed = 1235;
  const QuantileModel c = train(d, recipe, cfg);
  CHECK(serialize_model(a) != serialize_model(c));
}

TEST_CASE("lr_decay of one is a no-op and smaller values change the fit") {
  const Dataset d = gaussian_toy(150, 1.0, 0.25, 77);
  const FeatureRecipe recipe = build_recipe({{}, false, {}}, d.coord_bbox(), 1);
  TrainConfig cfg;
  cfg.hidden = {6};
  cfg.basis_count = 6;
  cfg.epochs = 5;
  cfg.seed = 1234;
  const QuantileModel base = train(d, recipe, cfg);
  cfg.lr_decay = 1.0;
  CHECK(serialize_model(train(d, recipe, cfg)) == serialize_model(base));
  cfg.lr_decay = 0.5;
  const QuantileModel decayed = train(d, recipe, cfg);
  CHECK(serialize_model(decayed) != serialize_model(base));
  CHECK(std::isfinite(decayed.meta.final_nll));
}

TEST_CASE("weight_decay of zero is a no-op and positive values shrink weights") {
  const Dataset d = gaussian_toy(150, 1.0, 0.25, 77);
  const FeatureRecipe recipe = build_recipe({{}, false, {}}, d.coord_bbox(), 1);
  TrainConfig cfg;
  cfg.hidden = {6};
  cfg.basis_count = 6;
  cfg.epochs = 5;
  cfg.seed = 1234;
  const QuantileModel base = train(d, recipe, cfg);
  cfg.weight_decay = 0.0;
  CHECK(serialize_model(train(d, recipe, cfg)) == serialize_model(base));
  cfg.weight_decay = 50.0;  // exaggerated so the pull is visible in 5 epochs
  const QuantileModel shrunk = train(d, recipe, cfg);
  CHECK(std::isfinite(shrunk.meta.final_nll));
  double n_base = 0.0, n_shrunk = 0.0;
  for (std::size_t l = 0; l < base.params.weights.size(); ++l) {
    n_base += base.params.weights[l].squaredNorm();
    n_shrunk += shrunk.params.weights[l].squaredNorm();
  }
  CHECK(n_shrunk < n_base);
}

TEST_CASE("NLL decreases monotonically over the first 10 epochs") {
  const Dataset d = gaussian_toy(200, 1.0, 0.25, 81);
  const FeatureRecipe recipe = build_recipe({{}, false, {}}, d.coord_bbox(), 1);
  TrainConfig cfg;
  cfg.hidden = {8};
  cfg.basis_count = 8;
  cfg.seed = 4;
  // Same seed means identical shuffle streams, so epochs=k replays the
  // first k epochs of a longer run.
  double prev = 0.0;
  for (int k = 0; k <= 10; ++k) {
    cfg.epochs = k;
    const double cur = train(d, recipe, cfg).meta.final_nll;
    if (k > 0) CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("fitted Gaussian toy recovers the treatment shift at the median") {
  const Dataset d = gaussian_toy(5000, 1.0, 0.25, 91);
  const FeatureRecipe recipe = build_recipe({{}, false, {}}, d.coord_bbox(), 1);
  TrainConfig cfg;
  cfg.hidden = {16};
  cfg.basis_count = 10;
  cfg.epochs = 150;
  cfg.seed = 17;
  const QuantileModel m = train(d, recipe, cfg);
  const std::vector<double> x{0.5};
  const double q1 = quantile(m, 1.0, x, {0.0, 0.0}, 0.5);
  const double q0 = quantile(m, 0.0, x, {0.0, 0.0}, 0.5);
  CHECK(q1 - q0 == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("train validates its configuration and inputs") {
  const Dataset d = gaussian_toy(50, 1.0, 0.25, 101);
  const FeatureRecipe recipe = build_recipe({{}, false, {}}, d.coord_bbox(), 1);
  TrainConfig cfg;
  cfg.hidden = {};
  CHECK_THROWS_AS(train(d, recipe, cfg), config_error);
  cfg.hidden = {4};
  cfg.basis_count = 1;
  CHECK_THROWS_AS(train(d, recipe, cfg), config_error);
  cfg.basis_count = 5;
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(train(d, recipe, cfg), config_error);
  cfg.learning_rate = 1e-3;
  cfg.lr_decay = 0.0;
  CHECK_THROWS_AS(train(d, recipe, cfg), config_error);
  cfg.lr_decay = 1.5;
  CHECK_THROWS_AS(train(d, recipe, cfg), config_error);
  cfg.lr_decay = 1.0;
  cfg.epochs = -1;
  CHECK_THROWS_AS(train(d, recipe, cfg), config_error);
  cfg.epochs = 1;
  const FeatureRecipe wrong = build_recipe({{}, false, {}}, d.coord_bbox(), 3);
  CHECK_THROWS_AS(train(d, wrong, cfg), config_error);
  CHECK_THROWS_AS(train(Dataset{}, recipe, cfg), data_error);
}

TEST_CASE("an absurd learning rate raises diverged_error with the epoch") {
  const Dataset d = gaussian_toy(100, 1.0, 0.25, 111);
  const FeatureRecipe recipe = build_recipe({{}, false, {}}, d.coord_bbox(), 1);
  TrainConfig cfg;
  cfg.hidden = {4};
  cfg.basis_count = 5;
  cfg.epochs = 50;
  // Adam steps are capped near the learning rate, so the first update puts
  // the output weights around 1e200 and their products overflow.
  cfg.learning_rate = 1e200;
  cfg.seed = 2;
  CHECK_THROWS_AS(train(d, recipe, cfg), diverged_error);
}

TEST_CASE("feature_column overrides the treatment slot only") {
  Dataset d = gaussian_toy(5, 1.0, 0.25, 121);
  const FeatureRecipe recipe = build_recipe({{9}, true, {}}, d.coord_bbox(), 1);
  const Eigen::MatrixXd X = build_feature_matrix(d, recipe);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Eigen::VectorXd observed =
        feature_column(d, i, recipe, d.t[i]);
    CHECK((observed - X.col(static_cast<Eigen::Index>(i)))
              .lpNorm<Eigen::Infinity>() == 0.0);
    const Eigen::VectorXd forced = feature_column(d, i, recipe, 1.0 - d.t[i]);
    CHECK(forced[0] == 1.0 - d.t[i]);
    CHECK((forced.tail(forced.size() - 1) -
           observed.tail(observed.size() - 1))
              .lpNorm<Eigen::Infinity>() == 0.0);
  }
}
