#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "csqr/dataset.hpp"
#include "csqr/spatial_features.hpp"
#include "csqr/spline_basis.hpp"

namespace csqr {

// Feed-forward network with rectified-linear hidden layers and a softmax
// head of width K producing the spline-mixture weights.
struct NetworkParams {
  std::vector<Eigen::MatrixXd> weights;  // W[l]: V_l x V_{l-1}
  std::vector<Eigen::VectorXd> biases;   // b[l]: V_l

  int input_dim() const {
    return weights.empty() ? 0 : static_cast<int>(weights.front().cols());
  }
  int output_dim() const {
    return weights.empty() ? 0 : static_cast<int>(weights.back().rows());
  }
  bool finite() const;
};

NetworkParams zero_params(int input_dim, const std::vector<int>& hidden,
                          int output_dim);
// Uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases.
NetworkParams glorot_init(int input_dim, const std::vector<int>& hidden,
                          int output_dim, std::uint64_t seed);

// Mixture weights theta(x): softmax of the final layer, stabilized by
// max-subtraction.  Throws on dimension mismatch or non-finite input.
Eigen::VectorXd forward(const NetworkParams& params, const Eigen::VectorXd& x);
// Column-wise batched variant: X is F x B, result K x B.
Eigen::MatrixXd forward_batch(const NetworkParams& params,
                              const Eigen::MatrixXd& X);

// Affine map of raw responses onto [margin, 1-margin]; quantiles are
// equivariant under it, so outputs are reported in original units.
struct ResponseScaler {
  double y_min = 0.0;
  double y_max = 1.0;
  double margin = 0.01;

  double scale(double y) const {
    return margin + (1.0 - 2.0 * margin) * (y - y_min) / (y_max - y_min);
  }
  double unscale(double v) const {
    return y_min + (v - margin) / (1.0 - 2.0 * margin) * (y_max - y_min);
  }
  double jacobian() const { return (1.0 - 2.0 * margin) / (y_max - y_min); }
};

ResponseScaler fit_scaler(std::span<const double> y, double margin = 0.01);

struct TrainMeta {
  std::uint64_t seed = 0;
  int epochs = 0;
  double final_nll = 0.0;
  int train_rows = 0;
  // Optimizer settings, kept so a saved model can be refitted (bootstrap).
  double learning_rate = 1e-3;
  int batch_size = 256;
};

struct QuantileModel {
  NetworkParams params;
  SplineGrid grid;
  FeatureRecipe recipe;
  ResponseScaler scaler;
  TrainMeta meta;
};

struct TrainConfig {
  std::vector<int> hidden = {32, 32};
  int basis_count = 10;  // K
  double learning_rate = 1e-3;
  double lr_decay = 1.0;      // per-epoch multiplicative decay, 1 = constant
  double weight_decay = 0.0;  // decoupled (AdamW-style), 0 = plain Adam
  int batch_size = 256;
  int epochs = 200;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

// Mini-batch view used by the likelihood: responses in original units
// paired with assembled feature columns.
struct Batch {
  Eigen::MatrixXd features;  // F x B
  Eigen::VectorXd y;         // B
};

// Likelihood floor inside the log; keeps the loss finite at support edges.
inline constexpr double kLikelihoodFloor = 1e-12;

// Mean negative log-likelihood -(1/B) sum log(sum_k theta_k M_k(y) + floor).
// Responses whose scaled value falls outside [0,1] are clamped; the count
// is reported through clamped_out when given.
double nll(const QuantileModel& model, const Batch& batch,
           int* clamped_out = nullptr);

// Analytic gradient of nll with respect to every weight and bias.
NetworkParams grad_nll(const QuantileModel& model, const Batch& batch);

// Maximum-likelihood fit: scaler from training responses, Glorot init and
// batch shuffling from cfg.seed, Adam updates; bit-reproducible per seed.
// Throws diverged_error (with the epoch) if the loss turns non-finite.
QuantileModel train(const Dataset& data, const FeatureRecipe& recipe,
                    const TrainConfig& cfg);

// Feature matrix (feature_length x n) for a whole dataset under a recipe.
Eigen::MatrixXd build_feature_matrix(const Dataset& data,
                                     const FeatureRecipe& recipe);
// Single feature column with the treatment slot overridden.
Eigen::VectorXd feature_column(const Dataset& data, std::size_t row,
                               const FeatureRecipe& recipe, double t_value);

}  // namespace csqr
