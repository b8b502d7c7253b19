#include "gmc/grad_embed.hpp"

#include "gmc/errors.hpp"
#include "gmc/rng.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace gmc::embed {

namespace {
constexpr Index kChunk = 256;
}

void EmbeddingConfig::validate() const {
  if (draws < 1) throw std::invalid_argument("number of parameter draws must be >= 1");
  if (mode == Mode::kRandomProjection && proj_dim < 1) throw std::invalid_argument("projection dimension must be >= 1");
}

Index EmbeddingConfig::dim_per_draw(const nn::MlpArch& arch) const {
  return mode == Mode::kRandomProjection ? proj_dim : arch.last_layer_params();
}

SignProjection::SignProjection(Index out_dim, Index in_dim, std::uint64_t seed) : signs_(out_dim, in_dim) {
  if (out_dim < 1 || in_dim < 1) throw std::invalid_argument("projection dimensions must be >= 1");
  Rng rng(seed);
  std::int8_t* data = signs_.data();
  const Index total = signs_.size();
  for (Index base = 0; base < total; base += 64) {
    std::uint64_t bits = rng.next();
    const Index end = std::min<Index>(base + 64, total);
    for (Index i = base; i < end; ++i, bits >>= 1) data[i] = (bits & 1U) ? 1 : -1;
  }
}

Eigen::VectorXd SignProjection::apply(const Eigen::VectorXd& x) const {
  if (x.size() != in_dim()) {
    throw DimensionError("vector of length " + std::to_string(x.size()) + " does not match projection input " +
                         std::to_string(in_dim()));
  }
  return (signs_.cast<double>() * x) / std::sqrt(static_cast<double>(out_dim()));
}

Eigen::MatrixXd SignProjection::apply(const Eigen::MatrixXd& columns) const {
  if (columns.rows() != in_dim()) throw DimensionError("matrix rows do not match projection input dimension");
  Eigen::MatrixXd out(out_dim(), columns.cols());
  const double scale = 1.0 / std::sqrt(static_cast<double>(out_dim()));
  for (Index r = 0; r < out_dim(); r += kChunk) {
    const Index len = std::min<Index>(kChunk, out_dim() - r);
    const Eigen::MatrixXd block = signs_.middleRows(r, len).cast<double>();
    out.middleRows(r, len).noalias() = block * columns;
  }
  return out * scale;
}

Eigen::VectorXd per_example_gradient(const nn::MlpParams& params, const Eigen::VectorXd& features, int label,
                                     Scope scope) {
  FeatureMatrix x = features.transpose();
  const int labels[] = {label};
  if (scope == Scope::kFull) return nn::per_example_gradients(params, x, labels).col(0);
  return nn::per_example_last_layer_gradients(params, x, labels).col(0);
}

Eigen::VectorXd project(const Eigen::VectorXd& gradient, const SignProjection& proj) { return proj.apply(gradient); }

SignProjection projection_for_draw(const EmbeddingConfig& config, Index in_dim, int draw) {
  return SignProjection(config.proj_dim, in_dim, derive_seed(config.projection_seed, static_cast<std::uint64_t>(draw)));
}

nn::MlpParams params_for_draw(const nn::MlpArch& arch, const EmbeddingConfig& config, int draw) {
  return nn::init_sample(arch, config.init_seed + static_cast<std::uint64_t>(draw));
}

Embedder::Embedder(nn::MlpArch arch, EmbeddingConfig config) : arch_(std::move(arch)), config_(config) {
  config_.validate();
  arch_.validate();
  for (int j = 0; j < config_.draws; ++j) draws_.push_back(params_for_draw(arch_, config_, j));
  if (config_.mode == Mode::kRandomProjection) {
    for (int j = 0; j < config_.draws; ++j) projections_.push_back(projection_for_draw(config_, arch_.num_params(), j));
  }
}

Embedder::Embedder(nn::MlpArch arch, EmbeddingConfig config, std::vector<nn::MlpParams> draws)
    : arch_(std::move(arch)), config_(config), draws_(std::move(draws)) {
  if (draws_.empty()) throw std::invalid_argument("embedder needs at least one parameter draw");
  config_.draws = static_cast<int>(draws_.size());
  config_.validate();
  arch_.validate();
  if (config_.mode == Mode::kRandomProjection) {
    for (int j = 0; j < config_.draws; ++j) projections_.push_back(projection_for_draw(config_, arch_.num_params(), j));
  }
}

GradientMatrix Embedder::embed(const Dataset& batch) const {
  if (batch.empty()) throw std::invalid_argument("cannot embed an empty batch");
  const Index per_draw = config_.dim_per_draw(arch_);
  const Index n = static_cast<Index>(batch.size());
  Eigen::MatrixXd out(dim(), n);
  for (Index start = 0; start < n; start += kChunk) {
    const Index len = std::min<Index>(kChunk, n - start);
    const FeatureMatrix x = batch.features.middleRows(start, len);
    const std::span<const int> y(batch.labels.data() + start, static_cast<std::size_t>(len));
    for (int j = 0; j < config_.draws; ++j) {
      auto block = out.block(j * per_draw, start, per_draw, len);
      try {
        if (config_.mode == Mode::kRandomProjection) {
          block = projections_[static_cast<std::size_t>(j)].apply(nn::per_example_gradients(draws_[static_cast<std::size_t>(j)], x, y));
        } else {
          block = nn::per_example_last_layer_gradients(draws_[static_cast<std::size_t>(j)], x, y);
        }
      } catch (const NumericalError& e) {
        const std::size_t idx = e.example() == NumericalError::npos ? NumericalError::npos
                                                                    : static_cast<std::size_t>(start) + e.example();
        throw NumericalError(std::string("embedding failed: ") + e.what(), idx);
      }
    }
  }
  return GradientMatrix(std::move(out));
}

GradientMatrix embed_batch(const Dataset& batch, const nn::MlpArch& arch, const EmbeddingConfig& config) {
  return Embedder(arch, config).embed(batch);
}

}  // namespace gmc::embed
