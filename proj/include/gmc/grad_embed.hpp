#pragma once

#include "gmc/dataset.hpp"
#include "gmc/matching_pursuit.hpp"
#include "gmc/nn.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace gmc::embed {

using Eigen::Index;

enum class Mode { kRandomProjection, kLastLayer };
enum class Scope { kFull, kLastLayer };

struct EmbeddingConfig {
  int draws = 4;
  Mode mode = Mode::kRandomProjection;
  Index proj_dim = 2000;
  std::uint64_t projection_seed = 0;
  std::uint64_t init_seed = 0;

  void validate() const;
  /// Rows contributed by one parameter draw.
  Index dim_per_draw(const nn::MlpArch& arch) const;
  /// Total embedding dimension D.
  Index dim(const nn::MlpArch& arch) const { return draws * dim_per_draw(arch); }
};

/// d x P matrix of +-1 entries, applied with scale 1/sqrt(d).
///
/// Entries come from xoshiro256** (see Rng) seeded with `seed`: each 64-bit
/// output supplies 64 consecutive entries in column-major order, least
/// significant bit first, bit 1 meaning +1.
class SignProjection {
 public:
  SignProjection(Index out_dim, Index in_dim, std::uint64_t seed);

  Index out_dim() const { return signs_.rows(); }
  Index in_dim() const { return signs_.cols(); }
  int sign(Index row, Index col) const { return signs_(row, col); }

  /// (S x) / sqrt(d) for a single vector or for every column of a matrix.
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd apply(const Eigen::MatrixXd& columns) const;

 private:
  Eigen::Matrix<std::int8_t, Eigen::Dynamic, Eigen::Dynamic> signs_;
};

Eigen::VectorXd per_example_gradient(const nn::MlpParams& params, const Eigen::VectorXd& features, int label,
                                     Scope scope);

Eigen::VectorXd project(const Eigen::VectorXd& gradient, const SignProjection& proj);

/// Projection matrix used for draw j: seed derive_seed(projection_seed, j).
SignProjection projection_for_draw(const EmbeddingConfig& config, Index in_dim, int draw);

/// Parameter draw j: init_sample(arch, init_seed + j).
nn::MlpParams params_for_draw(const nn::MlpArch& arch, const EmbeddingConfig& config, int draw);

/// Holds the parameter draws and projections so repeated batches share them.
class Embedder {
 public:
  /// Draws parameters from the initialisation distribution.
  Embedder(nn::MlpArch arch, EmbeddingConfig config);
  /// Uses the given parameter sets as draws (config.draws is overridden).
  Embedder(nn::MlpArch arch, EmbeddingConfig config, std::vector<nn::MlpParams> draws);

  Index dim() const { return config_.dim(arch_); }
  const EmbeddingConfig& config() const { return config_; }
  const nn::MlpArch& arch() const { return arch_; }
  const std::vector<nn::MlpParams>& draws() const { return draws_; }

  /// Column i is the concatenation over draws of example i's reduced gradient.
  GradientMatrix embed(const Dataset& batch) const;

 private:
  nn::MlpArch arch_;
  EmbeddingConfig config_;
  std::vector<nn::MlpParams> draws_;
  std::vector<SignProjection> projections_;
};

GradientMatrix embed_batch(const Dataset& batch, const nn::MlpArch& arch, const EmbeddingConfig& config);

}  // namespace gmc::embed
