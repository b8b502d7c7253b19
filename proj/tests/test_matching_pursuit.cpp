#include "gmc/errors.hpp"
#include "gmc/matching_pursuit.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

using namespace gmc;
using gmc::test::gaussian_matrix;
using gmc::test::gaussian_vector;

namespace {

// Plain OMP written out directly: argmax of the signed normalized score,
// then a QR refit on the support.
std::vector<Index> reference_omp(const Eigen::MatrixXd& g, const Eigen::VectorXd& target, Index n) {
  std::vector<Index> support;
  Eigen::VectorXd r = target;
  for (Index k = 0; k < n; ++k) {
    Index best = -1;
    double best_score = -INFINITY;
    for (Index j = 0; j < g.cols(); ++j) {
      if (std::find(support.begin(), support.end(), j) != support.end()) continue;
      const double norm = g.col(j).norm();
      if (norm == 0.0) continue;
      const double s = g.col(j).dot(r) / norm;
      if (s > best_score) {
        best_score = s;
        best = j;
      }
    }
    support.push_back(best);
    Eigen::MatrixXd a(g.rows(), static_cast<Index>(support.size()));
    for (std::size_t i = 0; i < support.size(); ++i) a.col(static_cast<Index>(i)) = g.col(support[i]);
    const Eigen::VectorXd w = a.colPivHouseholderQr().solve(target);
    r = target - a * w;
  }
  return support;
}

}  // namespace

TEST(GradientMatrix, CachesColumnNorms) {
  Eigen::MatrixXd m(2, 3);
  m << 3, 0, 1, 4, 0, 1;
  GradientMatrix g(m);
  EXPECT_DOUBLE_EQ(g.column_norms()(0), 5.0);
  EXPECT_DOUBLE_EQ(g.column_norms()(1), 0.0);
  EXPECT_DOUBLE_EQ(g.column_norms()(2), std::sqrt(2.0));
}

TEST(GradientMatrix, RejectsNonFinite) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Ones(2, 2);
  m(1, 1) = NAN;
  EXPECT_THROW(GradientMatrix{m}, NumericalError);
}

TEST(GradientMatrix, ConcatAndSelect) {
  Rng rng(1);
  GradientMatrix a(gaussian_matrix(rng, 4, 2)), b(gaussian_matrix(rng, 4, 3));
  GradientMatrix c = GradientMatrix::concat(a, b);
  ASSERT_EQ(c.cols(), 5);
  EXPECT_EQ(c.col(3), b.col(1));
  std::vector<Index> cols{4, 0};
  GradientMatrix s = c.select(cols);
  EXPECT_EQ(s.col(0), b.col(2));
  EXPECT_EQ(s.col(1), a.col(0));
  EXPECT_THROW(GradientMatrix::concat(a, GradientMatrix(gaussian_matrix(rng, 3, 1))), DimensionError);
  EXPECT_EQ(GradientMatrix::concat(GradientMatrix{}, b).cols(), 3);
}

TEST(Cholesky, AppendMatchesOneShot) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd a = gaussian_matrix(rng, 12, 6);
    const Eigen::MatrixXd gram = a.transpose() * a;
    CholeskyFactor chol(2);
    for (Index k = 0; k < 6; ++k) chol.append(gram.col(k).head(k), gram(k, k));
    const Eigen::MatrixXd want = gram.llt().matrixL();
    EXPECT_LE((chol.lower() - want).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Cholesky, FunctionalAppendLeavesInputUntouched) {
  CholeskyFactor c;
  c.append(Eigen::VectorXd(), 4.0);
  CholeskyFactor d = cholesky_append(c, Eigen::VectorXd::Constant(1, 1.0), 2.0);
  EXPECT_EQ(c.size(), 1);
  EXPECT_EQ(d.size(), 2);
  EXPECT_DOUBLE_EQ(d.lower()(1, 0), 0.5);
}

TEST(Cholesky, DuplicateColumnIsSingular) {
  CholeskyFactor c;
  c.append(Eigen::VectorXd(), 2.0);
  EXPECT_THROW(c.append(Eigen::VectorXd::Constant(1, 2.0), 2.0), SingularError);
}

TEST(Omp, NEqualsNSelectsEverythingAndSolvesExactly) {
  Rng rng(3);
  GradientMatrix g(gaussian_matrix(rng, 10, 6));
  const Eigen::VectorXd target = g.column_sum();
  CoresetSelection s = omp_select(g, target, 6);
  ASSERT_EQ(s.size(), 6u);
  std::set<Index> chosen(s.indices.begin(), s.indices.end());
  EXPECT_EQ(chosen.size(), 6u);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(s.weights(static_cast<Index>(i)), 1.0, 1e-9);
  EXPECT_LE(s.residual_norm(), 1e-9);
}

TEST(Omp, TwoOrthogonalColumnsExample) {
  Eigen::MatrixXd m(2, 2);
  m << 1, 0, 0, 1;
  GradientMatrix g(m);
  Eigen::VectorXd target(2);
  target << 3, 1;
  CoresetSelection s = omp_select(g, target, 1);
  ASSERT_EQ(s.indices, std::vector<Index>{0});
  EXPECT_DOUBLE_EQ(s.weights(0), 3.0);
  EXPECT_DOUBLE_EQ(s.residual_norm(), 1.0);
  EXPECT_DOUBLE_EQ(s.residual_norms.front(), target.norm());
}

TEST(Omp, SignedScoreSkipsAntiCorrelatedColumn) {
  Eigen::MatrixXd m(2, 2);
  m << -10, 1, 0, 1;
  Eigen::VectorXd target(2);
  target << 1, 0.1;
  EXPECT_EQ(omp_select(GradientMatrix(m), target, 1).indices.front(), 1);
  EXPECT_EQ(omp_select(GradientMatrix(m), target, 1, {ScoreRule::kAbsolute}).indices.front(), 0);
}

TEST(Omp, IdentityDictionaryUnderBothScores) {
  GradientMatrix g(Eigen::MatrixXd::Identity(3, 3));
  Eigen::VectorXd target(3);
  target << 2, 0, -1;
  CoresetSelection a = omp_select(g, target, 2, {ScoreRule::kAbsolute});
  EXPECT_EQ(a.indices, (std::vector<Index>{0, 2}));
  EXPECT_DOUBLE_EQ(a.weights(0), 2.0);
  EXPECT_DOUBLE_EQ(a.weights(1), -1.0);
  EXPECT_DOUBLE_EQ(a.residual_norm(), 0.0);
  // signed: after e1 the remaining scores are 0 and -1, so e2 wins
  CoresetSelection s = omp_select(g, target, 2);
  EXPECT_EQ(s.indices, (std::vector<Index>{0, 1}));
  EXPECT_DOUBLE_EQ(s.weights(1), 0.0);
  EXPECT_DOUBLE_EQ(s.residual_norm(), 1.0);
}

TEST(Omp, TiesGoToLowestIndexAndZeroColumnsNeverChosen) {
  Eigen::MatrixXd m(2, 4);
  m << 0, 1, 1, 0, 0, 0, 0, 1;
  Eigen::VectorXd target(2);
  target << 1, 1;
  CoresetSelection s = omp_select(GradientMatrix(m), target, 2);
  EXPECT_EQ(s.indices, (std::vector<Index>{1, 3}));
}

TEST(Omp, MatchesReferenceImplementation) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::MatrixXd m = gaussian_matrix(rng, 20, 40);
    const Eigen::VectorXd target = m.rowwise().sum();
    CoresetSelection s = omp_select(GradientMatrix(m), target, 8);
    EXPECT_EQ(s.indices, reference_omp(m, target, 8));
    EXPECT_LE(gmc::test::relative_error(s.weights, gmc::test::qr_least_squares(GradientMatrix(m), s.indices, target)),
              1e-8);
  }
}

TEST(Omp, ResidualNonIncreasing) {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    GradientMatrix g(gaussian_matrix(rng, 16, 30));
    CoresetSelection s = omp_select(g, gaussian_vector(rng, 16), 10);
    ASSERT_EQ(s.residual_norms.size(), s.size() + 1);
    for (std::size_t k = 1; k < s.residual_norms.size(); ++k) {
      EXPECT_LE(s.residual_norms[k], s.residual_norms[k - 1] * (1 + 1e-12));
    }
  }
}

TEST(Omp, TruncatesOnDuplicateColumns) {
  Eigen::MatrixXd m(3, 4);
  m << 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0;
  Eigen::VectorXd target(3);
  target << 4, 0, 0;
  CoresetSelection s = omp_select(GradientMatrix(m), target, 2);
  EXPECT_TRUE(s.truncated);
  EXPECT_EQ(s.size(), 1u);
  EXPECT_NEAR(s.weights(0), 4.0, 1e-12);
}

TEST(Omp, RejectsInfeasibleBudgets) {
  Rng rng(6);
  GradientMatrix g(gaussian_matrix(rng, 4, 10));
  const Eigen::VectorXd t = g.column_sum();
  EXPECT_THROW(omp_select(g, t, 0), DimensionError);
  EXPECT_THROW(omp_select(g, t, 11), DimensionError);
  try {
    omp_select(g, t, 5);
    FAIL() << "n > D accepted";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("D >= n"), std::string::npos);
  }
  EXPECT_THROW(omp_select(g, Eigen::VectorXd::Zero(3), 2), DimensionError);
  Eigen::VectorXd bad = t;
  bad(0) = INFINITY;
  EXPECT_THROW(omp_select(g, bad, 2), NumericalError);
}

TEST(Omp, RefitWeightsAgreesWithQr) {
  Rng rng(7);
  GradientMatrix g(gaussian_matrix(rng, 9, 5));
  const Eigen::VectorXd target = gaussian_vector(rng, 9);
  std::vector<Index> support{4, 1, 2};
  const Eigen::MatrixXd gram = g.select(support).data().transpose() * g.select(support).data();
  CholeskyFactor chol;
  for (Index k = 0; k < 3; ++k) chol.append(gram.col(k).head(k), gram(k, k));
  EXPECT_LE(gmc::test::relative_error(refit_weights(g, support, target, chol),
                                      gmc::test::qr_least_squares(g, support, target)),
            1e-10);
}
