#pragma once

#include "gmc/dataset.hpp"
#include "gmc/matching_pursuit.hpp"
#include "gmc/rng.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <vector>

namespace gmc::test {

inline Eigen::MatrixXd gaussian_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  }
  return m;
}

inline Eigen::VectorXd gaussian_vector(Rng& rng, Eigen::Index n) { return gaussian_matrix(rng, n, 1).col(0); }

// Least squares by QR, independent of the Cholesky route under test.
inline Eigen::VectorXd qr_least_squares(const GradientMatrix& g, const std::vector<Eigen::Index>& support,
                                        const Eigen::VectorXd& target) {
  Eigen::MatrixXd a(g.dims(), static_cast<Eigen::Index>(support.size()));
  for (std::size_t j = 0; j < support.size(); ++j) a.col(static_cast<Eigen::Index>(j)) = g.col(support[j]);
  return a.colPivHouseholderQr().solve(target);
}

inline double relative_error(const Eigen::VectorXd& got, const Eigen::VectorXd& want) {
  return (got - want).norm() / std::max(want.norm(), 1e-300);
}

// Random labelled dataset with ids 0..rows-1.
inline Dataset random_dataset(Rng& rng, std::size_t rows, Eigen::Index features, int classes) {
  Dataset d;
  d.features.resize(static_cast<Eigen::Index>(rows), features);
  for (Eigen::Index i = 0; i < d.features.rows(); ++i) {
    for (Eigen::Index j = 0; j < features; ++j) d.features(i, j) = rng.normal();
  }
  d.num_classes = classes;
  for (std::size_t i = 0; i < rows; ++i) {
    d.labels.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(classes))));
    d.ids.push_back(i);
  }
  for (Eigen::Index j = 0; j < features; ++j) d.feature_names.push_back("f" + std::to_string(j));
  for (int c = 0; c < classes; ++c) d.label_names.push_back("c" + std::to_string(c));
  return d;
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("gmc_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace gmc::test
