#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace gmc {

using Index = Eigen::Index;

/// Dense D x N matrix of gradient embeddings, one column per example, with
/// cached column norms.
class GradientMatrix {
 public:
  GradientMatrix() = default;
  explicit GradientMatrix(Eigen::MatrixXd data);

  Index dims() const { return data_.rows(); }
  Index cols() const { return data_.cols(); }
  bool empty() const { return data_.cols() == 0; }

  const Eigen::MatrixXd& data() const { return data_; }
  const Eigen::VectorXd& column_norms() const { return norms_; }
  auto col(Index i) const { return data_.col(i); }

  Eigen::VectorXd column_sum() const { return data_.rowwise().sum(); }

  /// Columns in the given order.
  GradientMatrix select(std::span<const Index> columns) const;
  /// [left, right]. Either side may be empty.
  static GradientMatrix concat(const GradientMatrix& left, const GradientMatrix& right);

 private:
  Eigen::MatrixXd data_;
  Eigen::VectorXd norms_;
};

/// Result of a sparse least-squares fit: ordered support plus weights.
struct CoresetSelection {
  std::vector<Index> indices;
  Eigen::VectorXd weights;
  /// residual_norms[t] is ||g - G_I gamma|| after t selections; entry 0 is ||g||.
  std::vector<double> residual_norms;
  /// Selection stopped before reaching n because the next column was
  /// linearly dependent on the support.
  bool truncated = false;

  std::size_t size() const { return indices.size(); }
  double residual_norm() const { return residual_norms.empty() ? 0.0 : residual_norms.back(); }
};

/// Lower-triangular L with L L^T = G_I^T G_I, grown one column at a time.
class CholeskyFactor {
 public:
  CholeskyFactor() = default;
  explicit CholeskyFactor(Index capacity);

  Index size() const { return size_; }
  Eigen::MatrixXd lower() const {
    return storage_.topLeftCorner(size_, size_).triangularView<Eigen::Lower>();
  }

  /// Extends the factor with a new column whose inner products with the
  /// current support are `cross` and whose squared norm is `diag`. Throws
  /// SingularError when the Schur complement vanishes; the factor is left
  /// unchanged in that case.
  void append(const Eigen::VectorXd& cross, double diag);

  /// Solves (L L^T) x = rhs with one forward and one backward substitution.
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;

 private:
  Eigen::MatrixXd storage_;
  Index size_ = 0;
};

/// Functional form of CholeskyFactor::append.
CholeskyFactor cholesky_append(const CholeskyFactor& chol, const Eigen::VectorXd& cross, double diag);

/// Least-squares weights (G_I^T G_I)^{-1} G_I^T g using the factor of the
/// support's Gram matrix.
Eigen::VectorXd refit_weights(const GradientMatrix& G, std::span<const Index> support,
                              const Eigen::VectorXd& target, const CholeskyFactor& chol);

enum class ScoreRule {
  /// argmax <g_k, r> / ||g_k||
  kSigned,
  /// argmax |<g_k, r>| / ||g_k||, the textbook OMP rule
  kAbsolute,
};

struct OmpOptions {
  ScoreRule score = ScoreRule::kSigned;
};

/// Orthogonal matching pursuit for min ||G lambda - g|| s.t. ||lambda||_0 <= n.
///
/// Each iteration adds the best-scoring unselected column with nonzero norm
/// (ties go to the lowest index) and refits all weights by least squares
/// through an incrementally updated Cholesky factor. Cost is
/// O(DNn + Nn^2 + n^3). Requires n <= min(N, D).
CoresetSelection omp_select(const GradientMatrix& G, const Eigen::VectorXd& target, Index n,
                            const OmpOptions& options = {});

}  // namespace gmc
