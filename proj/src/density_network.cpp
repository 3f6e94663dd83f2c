#include "csqr/density_network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "csqr/common.hpp"

namespace csqr {

bool NetworkParams::finite() const {
  for (const auto& w : weights)
    if (!w.allFinite()) return false;
  for (const auto& b : biases)
    if (!b.allFinite()) return false;
  return true;
}

static std::vector<int> layer_sizes(int input_dim,
                                    const std::vector<int>& hidden,
                                    int output_dim) {
  if (input_dim <= 0) throw config_error("network input dimension must be positive");
  if (output_dim <= 0) throw config_error("network output dimension must be positive");
  for (int h : hidden)
    if (h <= 0) throw config_error("hidden layer width must be positive");
  std::vector<int> sizes;
  sizes.push_back(input_dim);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(output_dim);
  return sizes;
}

NetworkParams zero_params(int input_dim, const std::vector<int>& hidden,
                          int output_dim) {
  auto sizes = layer_sizes(input_dim, hidden, output_dim);
  NetworkParams p;
  for (std::size_t l = 1; l < sizes.size(); ++l) {
    p.weights.push_back(Eigen::MatrixXd::Zero(sizes[l], sizes[l - 1]));
    p.biases.push_back(Eigen::VectorXd::Zero(sizes[l]));
  }
  return p;
}

NetworkParams glorot_init(int input_dim, const std::vector<int>& hidden,
                          int output_dim, std::uint64_t seed) {
  auto sizes = layer_sizes(input_dim, hidden, output_dim);
  NetworkParams p;
  Rng rng(seed);
  for (std::size_t l = 1; l < sizes.size(); ++l) {
    const int rows = sizes[l];
    const int cols = sizes[l - 1];
    const double limit = std::sqrt(6.0 / (rows + cols));
    Eigen::MatrixXd w(rows, cols);
    // Row-major fill so the draw order is part of the format.
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) w(r, c) = rng.uniform(-limit, limit);
    p.weights.push_back(std::move(w));
    p.biases.push_back(Eigen::VectorXd::Zero(rows));
  }
  return p;
}

Eigen::VectorXd forward(const NetworkParams& params, const Eigen::VectorXd& x) {
  if (params.weights.empty()) throw config_error("network has no layers");
  if (x.size() != params.weights.front().cols())
    throw config_error("feature vector length " + std::to_string(x.size()) +
                       " does not match network input " +
                       std::to_string(params.weights.front().cols()));
  if (!x.allFinite()) throw numeric_error("non-finite feature vector");
  Eigen::VectorXd a = x;
  const std::size_t L = params.weights.size();
  for (std::size_t l = 0; l + 1 < L; ++l) {
    a = (params.weights[l] * a + params.biases[l]).cwiseMax(0.0);
  }
  Eigen::VectorXd z = params.weights[L - 1] * a + params.biases[L - 1];
  const double zmax = z.maxCoeff();
  Eigen::VectorXd e = (z.array() - zmax).exp();
  return e / e.sum();
}

Eigen::MatrixXd forward_batch(const NetworkParams& params,
                              const Eigen::MatrixXd& X) {
  if (params.weights.empty()) throw config_error("network has no layers");
  if (X.rows() != params.weights.front().cols())
    throw config_error("feature matrix rows " + std::to_string(X.rows()) +
                       " do not match network input " +
                       std::to_string(params.weights.front().cols()));
  if (!X.allFinite()) throw numeric_error("non-finite feature matrix");
  Eigen::MatrixXd a = X;
  const std::size_t L = params.weights.size();
  for (std::size_t l = 0; l + 1 < L; ++l) {
    a = ((params.weights[l] * a).colwise() + params.biases[l]).cwiseMax(0.0);
  }
  Eigen::MatrixXd z = (params.weights[L - 1] * a).colwise() + params.biases[L - 1];
  Eigen::RowVectorXd zmax = z.colwise().maxCoeff();
  Eigen::MatrixXd e = (z.rowwise() - zmax).array().exp();
  Eigen::RowVectorXd s = e.colwise().sum();
  return e.array().rowwise() / s.array();
}

ResponseScaler fit_scaler(std::span<const double> y, double margin) {
  if (y.empty()) throw data_error("cannot fit response scaler on empty data");
  if (!(margin > 0.0 && margin < 0.5))
    throw config_error("scaler margin must lie in (0, 0.5)");
  double lo = y[0], hi = y[0];
  for (double v : y) {
    if (!std::isfinite(v)) throw data_error("non-finite response value");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi <= lo) throw data_error("response has zero range; cannot scale");
  return ResponseScaler{lo, hi, margin};
}

void TrainConfig::validate() const {
  if (hidden.empty()) throw config_error("at least one hidden layer is required");
  for (int h : hidden)
    if (h <= 0) throw config_error("hidden layer width must be positive");
  if (basis_count < 2) throw config_error("basis_count must be at least 2");
  if (!(learning_rate > 0.0)) throw config_error("learning_rate must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0))
    throw config_error("lr_decay must lie in (0, 1]");
  if (!(weight_decay >= 0.0))
    throw config_error("weight_decay must be non-negative");
  if (batch_size <= 0) throw config_error("batch_size must be positive");
  if (epochs < 0) throw config_error("epochs must be non-negative");
}

// Scale the batch responses and evaluate the M-basis at each; out-of-range
// responses (possible on held-out data) are clamped to the support.
static Eigen::MatrixXd basis_matrix(const SplineGrid& grid,
                                    const ResponseScaler& scaler,
                                    const Eigen::VectorXd& y, int* clamped) {
  const int K = grid.basis_count;
  Eigen::MatrixXd M(K, y.size());
  std::vector<double> m(K), iv(K);
  int n_clamped = 0;
  for (Eigen::Index j = 0; j < y.size(); ++j) {
    double v = scaler.scale(y[j]);
    if (v < 0.0 || v > 1.0) {
      ++n_clamped;
      v = std::clamp(v, 0.0, 1.0);
    }
    eval_all(grid, v, m, iv);
    for (int k = 0; k < K; ++k) M(k, j) = m[k];
  }
  if (clamped) *clamped += n_clamped;
  return M;
}

double nll(const QuantileModel& model, const Batch& batch, int* clamped_out) {
  if (batch.y.size() == 0) throw data_error("empty batch");
  if (batch.features.cols() != batch.y.size())
    throw data_error("batch feature/response size mismatch");
  int clamped = 0;
  Eigen::MatrixXd M = basis_matrix(model.grid, model.scaler, batch.y, &clamped);
  if (clamped_out) *clamped_out = clamped;
  Eigen::MatrixXd theta = forward_batch(model.params, batch.features);
  Eigen::ArrayXd f = (theta.array() * M.array()).colwise().sum();
  return -(f + kLikelihoodFloor).log().mean();
}

// Backprop through softmax head and rectifier stack.  With
// f_j = sum_k theta_kj M_kj and loss -(1/B) sum_j log(f_j + eps), the
// softmax-layer gradient is dL/dz_kj = -theta_kj (M_kj - f_j) / (f_j+eps) / B.
NetworkParams grad_nll(const QuantileModel& model, const Batch& batch) {
  if (batch.y.size() == 0) throw data_error("empty batch");
  if (batch.features.cols() != batch.y.size())
    throw data_error("batch feature/response size mismatch");
  const auto& params = model.params;
  const std::size_t L = params.weights.size();
  const Eigen::Index B = batch.y.size();

  // Forward pass keeping activations.
  std::vector<Eigen::MatrixXd> act(L);  // act[l] = input to layer l
  act[0] = batch.features;
  for (std::size_t l = 0; l + 1 < L; ++l) {
    act[l + 1] =
        ((params.weights[l] * act[l]).colwise() + params.biases[l]).cwiseMax(0.0);
  }
  Eigen::MatrixXd z =
      (params.weights[L - 1] * act[L - 1]).colwise() + params.biases[L - 1];
  Eigen::RowVectorXd zmax = z.colwise().maxCoeff();
  Eigen::MatrixXd theta = (z.rowwise() - zmax).array().exp();
  Eigen::RowVectorXd s = theta.colwise().sum();
  theta.array().rowwise() /= s.array();

  Eigen::MatrixXd M = basis_matrix(model.grid, model.scaler, batch.y, nullptr);
  Eigen::RowVectorXd f = (theta.array() * M.array()).colwise().sum();

  NetworkParams g = zero_params(params.input_dim(),
                                [&] {
                                  std::vector<int> hidden;
                                  for (std::size_t l = 0; l + 1 < L; ++l)
                                    hidden.push_back(
                                        static_cast<int>(params.weights[l].rows()));
                                  return hidden;
                                }(),
                                params.output_dim());

  Eigen::MatrixXd centered = M.rowwise() - f;
  Eigen::RowVectorXd w = ((f.array() + kLikelihoodFloor).inverse() *
                          (-1.0 / static_cast<double>(B)))
                             .matrix();
  Eigen::MatrixXd delta =
      (theta.array() * centered.array()).matrix() * w.asDiagonal();
  for (std::size_t li = L; li-- > 0;) {
    g.weights[li] = delta * act[li].transpose();
    g.biases[li] = delta.rowwise().sum();
    if (li > 0) {
      delta = (params.weights[li].transpose() * delta).array() *
              (act[li].array() > 0.0).cast<double>();
    }
  }
  return g;
}

QuantileModel train(const Dataset& data, const FeatureRecipe& recipe,
                    const TrainConfig& cfg) {
  cfg.validate();
  if (data.size() == 0) throw data_error("cannot train on empty dataset");
  if (data.covariate_count() != recipe.covariate_count)
    throw config_error("recipe covariate count does not match dataset");

  QuantileModel model;
  model.grid = build_grid(cfg.basis_count);
  model.recipe = recipe;
  model.scaler = fit_scaler(data.y);
  model.params = glorot_init(recipe.feature_length(), cfg.hidden,
                             cfg.basis_count, derive_seed(cfg.seed, 0x1717));
  model.meta.seed = cfg.seed;
  model.meta.train_rows = static_cast<int>(data.size());
  model.meta.learning_rate = cfg.learning_rate;
  model.meta.batch_size = cfg.batch_size;

  const Eigen::Index n = static_cast<Eigen::Index>(data.size());
  Eigen::MatrixXd X = build_feature_matrix(data, recipe);
  Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(data.y.data(), n);

  // Adam state.
  NetworkParams m = zero_params(recipe.feature_length(), cfg.hidden,
                                cfg.basis_count);
  NetworkParams v = m;
  const std::size_t L = model.params.weights.size();
  std::int64_t step = 0;

  Rng shuffle_rng(derive_seed(cfg.seed, 0x5137));
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  Batch full{X, y};
  double last_nll = nll(model, full);
  if (!std::isfinite(last_nll)) throw diverged_error(0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr =
        cfg.learning_rate * std::pow(cfg.lr_decay, static_cast<double>(epoch - 1));
    shuffle_rng.shuffle(order);
    for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
      const Eigen::Index b = std::min<Eigen::Index>(cfg.batch_size, n - start);
      Batch batch;
      batch.features.resize(X.rows(), b);
      batch.y.resize(b);
      for (Eigen::Index j = 0; j < b; ++j) {
        batch.features.col(j) = X.col(order[start + j]);
        batch.y[j] = y[order[start + j]];
      }
      NetworkParams g = grad_nll(model, batch);
      ++step;
      const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
      for (std::size_t l = 0; l < L; ++l) {
        m.weights[l] = cfg.adam_beta1 * m.weights[l] + (1.0 - cfg.adam_beta1) * g.weights[l];
        m.biases[l] = cfg.adam_beta1 * m.biases[l] + (1.0 - cfg.adam_beta1) * g.biases[l];
        v.weights[l] = cfg.adam_beta2 * v.weights[l] +
                       (1.0 - cfg.adam_beta2) * g.weights[l].array().square().matrix();
        v.biases[l] = cfg.adam_beta2 * v.biases[l] +
                      (1.0 - cfg.adam_beta2) * g.biases[l].array().square().matrix();
        model.params.weights[l].array() -=
            lr * ((m.weights[l].array() / bc1) /
                      ((v.weights[l].array() / bc2).sqrt() + cfg.adam_eps) +
                  cfg.weight_decay * model.params.weights[l].array());
        model.params.biases[l].array() -=
            lr * (m.biases[l].array() / bc1) /
            ((v.biases[l].array() / bc2).sqrt() + cfg.adam_eps);
      }
    }
    if (!model.params.finite()) throw diverged_error(epoch);
    last_nll = nll(model, full);
    if (!std::isfinite(last_nll)) throw diverged_error(epoch);
  }

  model.meta.epochs = cfg.epochs;
  model.meta.final_nll = last_nll;
  return model;
}

Eigen::MatrixXd build_feature_matrix(const Dataset& data,
                                     const FeatureRecipe& recipe) {
  const Eigen::Index n = static_cast<Eigen::Index>(data.size());
  const auto d = static_cast<std::size_t>(data.covariate_count());
  Eigen::MatrixXd X(recipe.feature_length(), n);
  std::vector<double> buf(static_cast<std::size_t>(recipe.feature_length()));
  std::vector<double> xrow(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    for (std::size_t c = 0; c < d; ++c) xrow[c] = data.x[c][idx];
    assemble_features(data.t[idx], xrow, data.location(idx), recipe, buf);
    X.col(i) = Eigen::Map<const Eigen::VectorXd>(buf.data(),
                                                 recipe.feature_length());
  }
  return X;
}

Eigen::VectorXd feature_column(const Dataset& data, std::size_t row,
                               const FeatureRecipe& recipe, double t_value) {
  const auto d = static_cast<std::size_t>(data.covariate_count());
  std::vector<double> buf(static_cast<std::size_t>(recipe.feature_length()));
  std::vector<double> xrow(d);
  for (std::size_t c = 0; c < d; ++c) xrow[c] = data.x[c][row];
  assemble_features(t_value, xrow, data.location(row), recipe, buf);
  return Eigen::Map<const Eigen::VectorXd>(buf.data(), recipe.feature_length());
}

}  // namespace csqr
