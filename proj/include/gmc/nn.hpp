#pragma once

#include "gmc/dataset.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace gmc::nn {

using Eigen::Index;

/// Fully connected ReLU network with a linear output layer.
struct MlpArch {
  Index input_dim = 0;
  std::vector<Index> hidden{128, 128};
  Index num_classes = 0;

  void validate() const;
  /// Width of the layer feeding the output layer.
  Index penultimate_width() const { return hidden.empty() ? input_dim : hidden.back(); }
  Index num_params() const;
  /// k*h + k for k classes and penultimate width h.
  Index last_layer_params() const { return num_classes * penultimate_width() + num_classes; }
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

/// Flattened order: layer by layer, weight (column-major) then bias. The
/// output layer therefore occupies the last last_layer_params() entries.
struct MlpParams {
  std::vector<DenseLayer> layers;

  Index num_params() const;
  Eigen::VectorXd flatten() const;
  static MlpParams unflatten(const MlpArch& arch, const Eigen::VectorXd& flat);
  MlpParams zeros_like() const;
  bool all_finite() const;
  bool operator==(const MlpParams& other) const;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  Index batch_size = 100;
  int epochs = 200;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AdamState {
  MlpParams first_moment;
  MlpParams second_moment;
  std::int64_t step = 0;

  static AdamState zeros_like(const MlpParams& params);
};

struct LossAndGrad {
  double loss = 0.0;
  MlpParams grads;
};

/// Each weight and bias i.i.d. uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
MlpParams init_sample(const MlpArch& arch, std::uint64_t seed);

/// Logits for every row of `inputs`, one column per example (k x B).
Eigen::MatrixXd logits(const MlpParams& params, const FeatureMatrix& inputs);

/// sum_i w_i l_i / sum_i w_i with softmax cross-entropy l_i, and its exact
/// gradient. Individual weights may be negative; a non-positive total is an
/// error.
LossAndGrad loss_and_grad(const MlpParams& params, const FeatureMatrix& inputs, std::span<const int> labels,
                          std::span<const double> weights);

/// Same loss with an explicit normaliser in place of sum_i w_i. Minibatch
/// training uses this so a minibatch estimates the full normalised loss.
LossAndGrad loss_and_grad(const MlpParams& params, const FeatureMatrix& inputs, std::span<const int> labels,
                          std::span<const double> weights, double normalizer);

/// Adam with bias correction. Throws NumericalError on non-finite gradients.
void adam_step(MlpParams& params, const MlpParams& grads, AdamState& state, const TrainConfig& config);

/// Gradient of the single-example loss w.r.t. all parameters, one column per
/// example (P x B), flattened as in MlpParams::flatten.
Eigen::MatrixXd per_example_gradients(const MlpParams& params, const FeatureMatrix& inputs,
                                      std::span<const int> labels);

/// Output-layer block of per_example_gradients computed from a forward pass
/// only: (softmax - onehot) h^T and (softmax - onehot). Shape (k*h + k) x B.
Eigen::MatrixXd per_example_last_layer_gradients(const MlpParams& params, const FeatureMatrix& inputs,
                                                 std::span<const int> labels);

/// Runs epochs x ceil(N / batch) Adam steps over a fresh seeded permutation
/// each epoch. Each minibatch loss is normalised by
/// (sum of all weights) * |batch| / N. `state` carries Adam moments in and
/// out when given.
MlpParams train(MlpParams params, const Dataset& data, std::span<const double> weights, const TrainConfig& config,
                AdamState* state = nullptr);

/// Fraction of rows whose argmax logit (ties to the lower class) equals the label.
double evaluate(const MlpParams& params, const Dataset& data);

MlpArch arch_for(const Dataset& data, std::vector<Index> hidden);

}  // namespace gmc::nn
