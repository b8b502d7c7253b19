#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gmc {

/// One example per row.
using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Labeled tabular data. `ids` records each row's position in the source it
/// was read or generated from, so subsets stay traceable.
struct Dataset {
  FeatureMatrix features;
  std::vector<int> labels;
  int num_classes = 0;
  std::vector<std::size_t> ids;
  std::vector<std::string> feature_names;
  /// label_names[c] is the source spelling of class c.
  std::vector<std::string> label_names;

  std::size_t size() const { return labels.size(); }
  Eigen::Index num_features() const { return features.cols(); }
  bool empty() const { return labels.empty(); }

  /// Rows in the given order; metadata is carried over.
  Dataset subset(std::span<const std::size_t> rows) const;
  /// Same metadata, zero rows.
  Dataset empty_like() const;
  void append(const Dataset& other);
  void append_row(const Dataset& other, std::size_t row);

  /// Throws std::invalid_argument when shapes, labels or values are bad.
  void validate() const;
};

/// Strict mapping from label spelling to class index.
struct LabelMap {
  std::vector<std::string> names;
  std::optional<int> find(const std::string& name) const;
};

struct CsvOptions {
  /// Column name (when the file has a header) or zero-based index.
  /// Empty means the last column.
  std::string label_column;
  bool has_header = true;
  /// When set, labels outside this mapping are an error and classes keep
  /// the mapping's indices. Otherwise classes are numbered by first
  /// appearance.
  const LabelMap* labels = nullptr;
};

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options = {});
/// Writes features then the label column ("label"), full precision.
void write_csv(const Dataset& data, const std::filesystem::path& path);

}  // namespace gmc
