#pragma once

#include "gmc/dataset.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace gmc {

enum class ScenarioKind { kSorted, kClassIncremental, kIidIncremental };

std::string to_string(ScenarioKind kind);
ScenarioKind parse_scenario_kind(const std::string& text);

/// Ordered training batches plus a held-out test set.
struct ContinualScenario {
  ScenarioKind kind = ScenarioKind::kSorted;
  std::string name;
  std::vector<Dataset> batches;
  Dataset test;
  std::uint64_t seed = 0;

  std::size_t num_tasks() const { return batches.size(); }
  std::size_t train_size() const;
  /// Non-empty batches, consistent feature counts, disjoint train/test ids.
  void validate() const;
};

struct TrainTestSplit {
  Dataset train;
  Dataset test;
};

/// Seeded uniform split; both parts keep the original relative row order.
TrainTestSplit train_test_split(const Dataset& data, double test_fraction, std::uint64_t seed);

/// Per-feature affine map to mean 0, variance 1 (fitted on training data).
/// Constant features are only centred.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static Standardizer fit(const Dataset& data);
  void apply(Dataset& data) const;
};

/// Sizes of `parts` contiguous chunks of `total` differing by at most one,
/// larger chunks first.
std::vector<std::size_t> balanced_sizes(std::size_t total, std::size_t parts);

/// Stable ascending sort of `train` by one feature, cut into balanced
/// contiguous batches.
ContinualScenario make_sorted_scenario(const Dataset& train, const Dataset& test, Eigen::Index feature_index = 0,
                                       std::size_t num_batches = 10);

/// Task t holds labels {t*c, ..., t*c + c - 1} in original order.
ContinualScenario make_class_incremental(const Dataset& train, const Dataset& test, int classes_per_task = 2);

/// Seeded shuffle, then balanced contiguous batches.
ContinualScenario make_iid_incremental(const Dataset& train, const Dataset& test, std::size_t num_batches,
                                       std::uint64_t seed);

/// Gaussian blobs with unit covariance, one per class, class means on a
/// randomly rotated regular simplex of the given radius (random directions
/// when dims < num_classes). Feature 0 of every example additionally gets
/// drift * u with u ~ U(0, 1). Rows are ordered class by class.
Dataset synth_blobs(std::uint64_t seed, std::size_t n_per_class, int num_classes, Eigen::Index dims, double drift,
                    double radius = 4.0);

/// batches x classes matrix of relative class frequencies.
Eigen::MatrixXd class_frequencies(const ContinualScenario& scenario);

void write_class_frequencies(const Eigen::MatrixXd& table, const std::filesystem::path& path);
/// key = value summary: kind, name, seed, sizes.
void write_scenario_manifest(const ContinualScenario& scenario, const std::filesystem::path& path);

}  // namespace gmc
