#include "gmc/nn.hpp"

#include "gmc/errors.hpp"
#include "gmc/rng.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace gmc::nn {

void MlpArch::validate() const {
  if (input_dim < 1 || num_classes < 1) throw std::invalid_argument("MLP input and output widths must be >= 1");
  for (Index h : hidden) {
    if (h < 1) throw std::invalid_argument("MLP hidden widths must be >= 1");
  }
}

Index MlpArch::num_params() const {
  Index total = 0;
  Index fan_in = input_dim;
  for (Index h : hidden) {
    total += h * fan_in + h;
    fan_in = h;
  }
  return total + num_classes * fan_in + num_classes;
}

Index MlpParams::num_params() const {
  Index total = 0;
  for (const auto& l : layers) total += l.weight.size() + l.bias.size();
  return total;
}

Eigen::VectorXd MlpParams::flatten() const {
  Eigen::VectorXd flat(num_params());
  Index at = 0;
  for (const auto& l : layers) {
    flat.segment(at, l.weight.size()) = l.weight.reshaped();
    at += l.weight.size();
    flat.segment(at, l.bias.size()) = l.bias;
    at += l.bias.size();
  }
  return flat;
}

MlpParams MlpParams::unflatten(const MlpArch& arch, const Eigen::VectorXd& flat) {
  if (flat.size() != arch.num_params()) throw DimensionError("flat parameter vector has the wrong length");
  MlpParams p;
  Index at = 0;
  Index fan_in = arch.input_dim;
  auto add = [&](Index out) {
    DenseLayer l;
    l.weight = flat.segment(at, out * fan_in).reshaped(out, fan_in);
    at += out * fan_in;
    l.bias = flat.segment(at, out);
    at += out;
    p.layers.push_back(std::move(l));
    fan_in = out;
  };
  for (Index h : arch.hidden) add(h);
  add(arch.num_classes);
  return p;
}

MlpParams MlpParams::zeros_like() const {
  MlpParams z;
  for (const auto& l : layers) {
    z.layers.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()), Eigen::VectorXd::Zero(l.bias.size())});
  }
  return z;
}

bool MlpParams::all_finite() const {
  for (const auto& l : layers) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

bool MlpParams::operator==(const MlpParams& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& a = layers[i];
    const auto& b = other.layers[i];
    if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() || a.bias.size() != b.bias.size()) {
      return false;
    }
    if (a.weight != b.weight || a.bias != b.bias) return false;
  }
  return true;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("Adam epsilon must be positive");
}

AdamState AdamState::zeros_like(const MlpParams& params) {
  return AdamState{params.zeros_like(), params.zeros_like(), 0};
}

MlpParams init_sample(const MlpArch& arch, std::uint64_t seed) {
  arch.validate();
  Rng rng(seed);
  MlpParams p;
  Index fan_in = arch.input_dim;
  auto add = [&](Index out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    DenseLayer l{Eigen::MatrixXd(out, fan_in), Eigen::VectorXd(out)};
    for (Index j = 0; j < l.weight.size(); ++j) l.weight.data()[j] = rng.uniform(-bound, bound);
    for (Index j = 0; j < out; ++j) l.bias(j) = rng.uniform(-bound, bound);
    p.layers.push_back(std::move(l));
    fan_in = out;
  };
  for (Index h : arch.hidden) add(h);
  add(arch.num_classes);
  return p;
}

namespace {

struct Forward {
  // activations[0] is the input (F x B); activations[l] is the output of
  // hidden layer l. pre[l] is the pre-activation of layer l.
  std::vector<Eigen::MatrixXd> activations;
  std::vector<Eigen::MatrixXd> pre;
};

Forward forward(const MlpParams& params, const FeatureMatrix& inputs) {
  if (params.layers.empty()) throw std::invalid_argument("MLP has no layers");
  if (inputs.cols() != params.layers.front().weight.cols()) {
    throw DimensionError("input has " + std::to_string(inputs.cols()) + " features, model expects " +
                         std::to_string(params.layers.front().weight.cols()));
  }
  Forward f;
  f.activations.reserve(params.layers.size());
  f.activations.push_back(inputs.transpose());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    Eigen::MatrixXd z = layer.weight * f.activations.back();
    z.colwise() += layer.bias;
    if (l + 1 < params.layers.size()) f.activations.push_back(z.cwiseMax(0.0));
    f.pre.push_back(std::move(z));
  }
  return f;
}

void check_labels(std::span<const int> labels, Index rows, Index classes) {
  if (static_cast<Index>(labels.size()) != rows) throw DimensionError("labels and inputs differ in length");
  for (int y : labels) {
    if (y < 0 || y >= classes) throw DimensionError("label " + std::to_string(y) + " out of class range");
  }
}

// Softmax probabilities minus one-hot targets, plus per-example losses.
Eigen::MatrixXd softmax_residual(const Eigen::MatrixXd& logits, std::span<const int> labels,
                                 Eigen::VectorXd* losses) {
  Eigen::MatrixXd p(logits.rows(), logits.cols());
  if (losses) losses->resize(logits.cols());
  for (Index i = 0; i < logits.cols(); ++i) {
    const auto z = logits.col(i);
    if (!z.allFinite()) throw NumericalError("non-finite logits for example " + std::to_string(i), static_cast<std::size_t>(i));
    const double m = z.maxCoeff();
    const Eigen::VectorXd e = (z.array() - m).exp();
    const double s = e.sum();
    p.col(i) = e / s;
    const int y = labels[static_cast<std::size_t>(i)];
    if (losses) (*losses)(i) = m + std::log(s) - z(y);
    p(y, i) -= 1.0;
  }
  return p;
}

}  // namespace

Eigen::MatrixXd logits(const MlpParams& params, const FeatureMatrix& inputs) {
  return forward(params, inputs).pre.back();
}

LossAndGrad loss_and_grad(const MlpParams& params, const FeatureMatrix& inputs, std::span<const int> labels,
                          std::span<const double> weights) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0)) throw std::invalid_argument("sum of example weights must be positive");
  return loss_and_grad(params, inputs, labels, weights, total);
}

LossAndGrad loss_and_grad(const MlpParams& params, const FeatureMatrix& inputs, std::span<const int> labels,
                          std::span<const double> weights, double normalizer) {
  if (!(normalizer > 0.0)) throw std::invalid_argument("loss normaliser must be positive");
  if (weights.size() != labels.size()) throw DimensionError("weights and labels differ in length");
  check_labels(labels, inputs.rows(), params.layers.back().weight.rows());

  Forward f = forward(params, inputs);
  Eigen::VectorXd losses;
  Eigen::MatrixXd delta = softmax_residual(f.pre.back(), labels, &losses);
  const Eigen::Map<const Eigen::VectorXd> w(weights.data(), static_cast<Index>(weights.size()));
  const Eigen::VectorXd scale = w / normalizer;

  LossAndGrad out;
  out.loss = losses.dot(scale);
  delta = delta * scale.asDiagonal();
  out.grads.layers.resize(params.layers.size());
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    out.grads.layers[l].weight = delta * f.activations[l].transpose();
    out.grads.layers[l].bias = delta.rowwise().sum();
    if (l > 0) {
      delta = (params.layers[l].weight.transpose() * delta).cwiseProduct(
          (f.pre[l - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  return out;
}

void adam_step(MlpParams& params, const MlpParams& grads, AdamState& state, const TrainConfig& config) {
  if (grads.layers.size() != params.layers.size() || state.first_moment.layers.size() != params.layers.size()) {
    throw DimensionError("parameter, gradient and optimiser state shapes disagree");
  }
  if (!grads.all_finite()) throw NumericalError("non-finite gradient in Adam step");
  ++state.step;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  auto update = [&](auto& theta, const auto& g, auto& m, auto& v) {
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v.array() + (1.0 - config.beta2) * g.array().square();
    theta.array() -= config.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + config.epsilon);
  };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    update(params.layers[l].weight, grads.layers[l].weight, state.first_moment.layers[l].weight,
           state.second_moment.layers[l].weight);
    update(params.layers[l].bias, grads.layers[l].bias, state.first_moment.layers[l].bias,
           state.second_moment.layers[l].bias);
  }
}

Eigen::MatrixXd per_example_gradients(const MlpParams& params, const FeatureMatrix& inputs,
                                      std::span<const int> labels) {
  check_labels(labels, inputs.rows(), params.layers.back().weight.rows());
  Forward f = forward(params, inputs);
  Eigen::MatrixXd delta = softmax_residual(f.pre.back(), labels, nullptr);
  const Index batch = inputs.rows();
  Eigen::MatrixXd out(params.num_params(), batch);

  // Offsets of each layer's block in the flattened vector.
  std::vector<Index> offset(params.layers.size());
  Index at = 0;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    offset[l] = at;
    at += params.layers[l].weight.size() + params.layers[l].bias.size();
  }

  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const Index rows = params.layers[l].weight.rows();
    const Index cols = params.layers[l].weight.cols();
    for (Index i = 0; i < batch; ++i) {
      Eigen::Map<Eigen::MatrixXd> gw(out.col(i).data() + offset[l], rows, cols);
      gw.noalias() = delta.col(i) * f.activations[l].col(i).transpose();
      out.col(i).segment(offset[l] + rows * cols, rows) = delta.col(i);
    }
    if (l > 0) {
      delta = (params.layers[l].weight.transpose() * delta).cwiseProduct(
          (f.pre[l - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  if (!out.allFinite()) {
    for (Index i = 0; i < batch; ++i) {
      if (!out.col(i).allFinite()) {
        throw NumericalError("non-finite gradient for example " + std::to_string(i), static_cast<std::size_t>(i));
      }
    }
  }
  return out;
}

Eigen::MatrixXd per_example_last_layer_gradients(const MlpParams& params, const FeatureMatrix& inputs,
                                                 std::span<const int> labels) {
  const auto& last = params.layers.back();
  check_labels(labels, inputs.rows(), last.weight.rows());
  Forward f = forward(params, inputs);
  const Eigen::MatrixXd delta = softmax_residual(f.pre.back(), labels, nullptr);
  const Eigen::MatrixXd& h = f.activations.back();
  const Index k = last.weight.rows();
  const Index width = last.weight.cols();
  Eigen::MatrixXd out(k * width + k, inputs.rows());
  for (Index i = 0; i < inputs.rows(); ++i) {
    Eigen::Map<Eigen::MatrixXd>(out.col(i).data(), k, width).noalias() = delta.col(i) * h.col(i).transpose();
    out.col(i).tail(k) = delta.col(i);
  }
  return out;
}

MlpParams train(MlpParams params, const Dataset& data, std::span<const double> weights, const TrainConfig& config,
                AdamState* state) {
  config.validate();
  if (data.empty()) throw std::invalid_argument("cannot train on an empty dataset");
  if (weights.size() != data.size()) throw DimensionError("one weight per training example required");
  if (config.epochs == 0) return params;
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0)) throw std::invalid_argument("sum of example weights must be positive");

  AdamState local = state ? *state : AdamState::zeros_like(params);
  Rng rng(config.seed);
  const std::size_t n = data.size();
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  FeatureMatrix xb;
  std::vector<int> yb;
  std::vector<double> wb;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const std::vector<std::size_t> order = rng.permutation(n);
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t len = std::min(batch, n - start);
      xb.resize(static_cast<Index>(len), data.features.cols());
      yb.resize(len);
      wb.resize(len);
      for (std::size_t j = 0; j < len; ++j) {
        const std::size_t r = order[start + j];
        xb.row(static_cast<Index>(j)) = data.features.row(static_cast<Index>(r));
        yb[j] = data.labels[r];
        wb[j] = weights[r];
      }
      const double normalizer = total * static_cast<double>(len) / static_cast<double>(n);
      LossAndGrad lg = loss_and_grad(params, xb, yb, wb, normalizer);
      adam_step(params, lg.grads, local, config);
    }
  }
  if (state) *state = std::move(local);
  return params;
}

double evaluate(const MlpParams& params, const Dataset& data) {
  if (data.empty()) throw std::invalid_argument("cannot evaluate on an empty test set");
  std::size_t correct = 0;
  constexpr Index chunk = 1024;
  for (Index start = 0; start < static_cast<Index>(data.size()); start += chunk) {
    const Index len = std::min<Index>(chunk, static_cast<Index>(data.size()) - start);
    const Eigen::MatrixXd z = logits(params, data.features.middleRows(start, len));
    for (Index i = 0; i < len; ++i) {
      Index best = 0;
      for (Index c = 1; c < z.rows(); ++c) {
        if (z(c, i) > z(best, i)) best = c;
      }
      if (best == data.labels[static_cast<std::size_t>(start + i)]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

MlpArch arch_for(const Dataset& data, std::vector<Index> hidden) {
  MlpArch arch{data.num_features(), std::move(hidden), data.num_classes};
  arch.validate();
  return arch;
}

}  // namespace gmc::nn
