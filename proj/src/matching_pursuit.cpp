#include "gmc/matching_pursuit.hpp"

#include "gmc/errors.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace gmc {

namespace {

// Schur complements at or below this fraction of the new diagonal are
// treated as exact linear dependence.
constexpr double kSingularTol = 1e-14;
// Between kSingularTol and kJitterBand the new pivot is inflated by
// kJitter * diag.
constexpr double kJitterBand = 1e-12;
constexpr double kJitter = 1e-10;

}  // namespace

GradientMatrix::GradientMatrix(Eigen::MatrixXd data) : data_(std::move(data)) {
  if (!data_.allFinite()) throw NumericalError("gradient matrix contains non-finite entries");
  norms_ = data_.colwise().norm().transpose();
}

GradientMatrix GradientMatrix::select(std::span<const Index> columns) const {
  Eigen::MatrixXd out(dims(), static_cast<Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (columns[j] < 0 || columns[j] >= cols()) throw DimensionError("column index out of range");
    out.col(static_cast<Index>(j)) = data_.col(columns[j]);
  }
  return GradientMatrix(std::move(out));
}

GradientMatrix GradientMatrix::concat(const GradientMatrix& left, const GradientMatrix& right) {
  if (left.empty()) return right;
  if (right.empty()) return left;
  if (left.dims() != right.dims()) {
    throw DimensionError("cannot concatenate gradient matrices with " + std::to_string(left.dims()) +
                         " and " + std::to_string(right.dims()) + " rows");
  }
  Eigen::MatrixXd out(left.dims(), left.cols() + right.cols());
  out << left.data_, right.data_;
  return GradientMatrix(std::move(out));
}

CholeskyFactor::CholeskyFactor(Index capacity) : storage_(capacity, capacity) {}

void CholeskyFactor::append(const Eigen::VectorXd& cross, double diag) {
  if (cross.size() != size_) {
    throw DimensionError("cross-product vector has length " + std::to_string(cross.size()) +
                         ", factor has size " + std::to_string(size_));
  }
  if (!(diag > 0.0)) throw SingularError("new column has non-positive squared norm");

  Eigen::VectorXd w;
  double schur = diag;
  if (size_ > 0) {
    w = storage_.topLeftCorner(size_, size_).triangularView<Eigen::Lower>().solve(cross);
    schur = diag - w.squaredNorm();
  }
  if (!(schur > kSingularTol * diag)) {
    throw SingularError("new column is linearly dependent on the current support");
  }
  if (schur <= kJitterBand * diag) schur += kJitter * diag;

  if (storage_.rows() <= size_) {
    const Index grown = std::max<Index>(4, 2 * storage_.rows());
    storage_.conservativeResize(grown, grown);
  }
  if (size_ > 0) storage_.row(size_).head(size_) = w.transpose();
  storage_(size_, size_) = std::sqrt(schur);
  ++size_;
}

Eigen::VectorXd CholeskyFactor::solve(const Eigen::VectorXd& rhs) const {
  if (rhs.size() != size_) throw DimensionError("right-hand side does not match factor size");
  const auto L = storage_.topLeftCorner(size_, size_);
  for (Index i = 0; i < size_; ++i) {
    if (!(L(i, i) > 0.0)) throw SingularError("Cholesky factor has a non-positive diagonal entry");
  }
  Eigen::VectorXd y = L.triangularView<Eigen::Lower>().solve(rhs);
  return L.transpose().triangularView<Eigen::Upper>().solve(y);
}

CholeskyFactor cholesky_append(const CholeskyFactor& chol, const Eigen::VectorXd& cross, double diag) {
  CholeskyFactor out = chol;
  out.append(cross, diag);
  return out;
}

Eigen::VectorXd refit_weights(const GradientMatrix& G, std::span<const Index> support,
                              const Eigen::VectorXd& target, const CholeskyFactor& chol) {
  if (support.empty()) throw DimensionError("refit needs a non-empty support");
  if (static_cast<Index>(support.size()) != chol.size()) {
    throw DimensionError("support size does not match the Cholesky factor");
  }
  if (target.size() != G.dims()) throw DimensionError("target length does not match embedding dimension");
  Eigen::VectorXd rhs(static_cast<Index>(support.size()));
  for (std::size_t j = 0; j < support.size(); ++j) rhs(static_cast<Index>(j)) = G.col(support[j]).dot(target);
  return chol.solve(rhs);
}

CoresetSelection omp_select(const GradientMatrix& G, const Eigen::VectorXd& target, Index n,
                            const OmpOptions& options) {
  const Index D = G.dims();
  const Index N = G.cols();
  if (target.size() != D) {
    throw DimensionError("target has length " + std::to_string(target.size()) + " but the embedding dimension is " +
                         std::to_string(D));
  }
  if (n < 1) throw DimensionError("coreset size must be positive");
  if (n > N) {
    throw DimensionError("coreset size n=" + std::to_string(n) + " exceeds the number of columns N=" +
                         std::to_string(N));
  }
  if (n > D) {
    throw DimensionError("coreset size n=" + std::to_string(n) + " exceeds the embedding dimension D=" +
                         std::to_string(D) + "; the Gram matrix of the support is singular unless D >= n");
  }
  if (!target.allFinite()) throw NumericalError("target vector contains non-finite entries");

  const Eigen::MatrixXd& data = G.data();
  const Eigen::VectorXd& norms = G.column_norms();
  const Eigen::VectorXd gram_target = data.transpose() * target;

  CoresetSelection sel;
  sel.indices.reserve(static_cast<std::size_t>(n));
  sel.residual_norms.push_back(target.norm());

  std::vector<char> selected(static_cast<std::size_t>(N), 0);
  CholeskyFactor chol(n);
  Eigen::VectorXd residual = target;
  Eigen::VectorXd weights;

  while (static_cast<Index>(sel.indices.size()) < n) {
    const Eigen::VectorXd corr = data.transpose() * residual;
    Index best = -1;
    double best_score = -std::numeric_limits<double>::infinity();
    for (Index k = 0; k < N; ++k) {
      if (selected[static_cast<std::size_t>(k)] || norms(k) == 0.0) continue;
      double score = corr(k) / norms(k);
      if (options.score == ScoreRule::kAbsolute) score = std::abs(score);
      if (best < 0 || score > best_score) {
        best = k;
        best_score = score;
      }
    }
    if (best < 0) {
      sel.truncated = true;
      break;
    }

    const Index m = static_cast<Index>(sel.indices.size());
    Eigen::VectorXd cross(m);
    for (Index j = 0; j < m; ++j) cross(j) = data.col(sel.indices[static_cast<std::size_t>(j)]).dot(data.col(best));
    try {
      chol.append(cross, norms(best) * norms(best));
    } catch (const SingularError&) {
      sel.truncated = true;
      break;
    }
    sel.indices.push_back(best);
    selected[static_cast<std::size_t>(best)] = 1;

    Eigen::VectorXd rhs(m + 1);
    for (Index j = 0; j <= m; ++j) rhs(j) = gram_target(sel.indices[static_cast<std::size_t>(j)]);
    weights = chol.solve(rhs);

    residual = target;
    for (Index j = 0; j <= m; ++j) residual.noalias() -= weights(j) * data.col(sel.indices[static_cast<std::size_t>(j)]);
    sel.residual_norms.push_back(residual.norm());
  }

  sel.weights = std::move(weights);
  return sel;
}

}  // namespace gmc
