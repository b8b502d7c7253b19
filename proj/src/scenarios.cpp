#include "gmc/scenarios.hpp"

#include "gmc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

namespace gmc {

std::string to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::kSorted:
      return "sorted";
    case ScenarioKind::kClassIncremental:
      return "class_incremental";
    case ScenarioKind::kIidIncremental:
      return "iid_incremental";
  }
  return "unknown";
}

ScenarioKind parse_scenario_kind(const std::string& text) {
  if (text == "sorted") return ScenarioKind::kSorted;
  if (text == "class_incremental") return ScenarioKind::kClassIncremental;
  if (text == "iid_incremental") return ScenarioKind::kIidIncremental;
  throw std::invalid_argument("unknown scenario kind '" + text + "'");
}

std::size_t ContinualScenario::train_size() const {
  std::size_t total = 0;
  for (const auto& b : batches) total += b.size();
  return total;
}

void ContinualScenario::validate() const {
  if (batches.empty()) throw std::invalid_argument("scenario has no batches");
  const Eigen::Index f = batches.front().num_features();
  std::set<std::size_t> train_ids;
  for (const auto& b : batches) {
    if (b.empty()) throw std::invalid_argument("scenario contains an empty batch");
    if (b.num_features() != f) throw std::invalid_argument("scenario batches disagree in feature count");
    train_ids.insert(b.ids.begin(), b.ids.end());
  }
  if (!test.empty()) {
    if (test.num_features() != f) throw std::invalid_argument("test set feature count differs from training batches");
    for (std::size_t id : test.ids) {
      if (train_ids.count(id)) throw std::invalid_argument("test set overlaps training batches");
    }
  }
}

TrainTestSplit train_test_split(const Dataset& data, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw std::invalid_argument("test fraction must lie in (0, 1)");
  const std::size_t n = data.size();
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  if (n_test == 0 || n_test >= n) throw std::invalid_argument("dataset too small for the requested split");
  Rng rng(seed);
  std::vector<std::size_t> perm = rng.permutation(n);
  std::vector<std::size_t> test_rows(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train_rows(perm.begin() + static_cast<std::ptrdiff_t>(n_test), perm.end());
  std::sort(test_rows.begin(), test_rows.end());
  std::sort(train_rows.begin(), train_rows.end());
  return {data.subset(train_rows), data.subset(test_rows)};
}

Standardizer Standardizer::fit(const Dataset& data) {
  if (data.empty()) throw std::invalid_argument("cannot fit a standardizer on no data");
  Standardizer s;
  s.mean = data.features.colwise().mean();
  const Eigen::RowVectorXd var =
      (data.features.rowwise() - s.mean).array().square().colwise().sum() / static_cast<double>(data.size());
  s.scale = var.array().sqrt();
  for (Eigen::Index j = 0; j < s.scale.size(); ++j) {
    if (!(s.scale(j) > 0.0)) s.scale(j) = 1.0;
  }
  return s;
}

void Standardizer::apply(Dataset& data) const {
  if (data.num_features() != mean.size()) throw std::invalid_argument("standardizer feature count mismatch");
  data.features = ((data.features.rowwise() - mean).array().rowwise() / scale.array()).matrix();
}

std::vector<std::size_t> balanced_sizes(std::size_t total, std::size_t parts) {
  if (parts == 0) throw std::invalid_argument("number of batches must be >= 1");
  if (parts > total) throw std::invalid_argument("more batches than examples");
  std::vector<std::size_t> sizes(parts, total / parts);
  for (std::size_t i = 0; i < total % parts; ++i) ++sizes[i];
  return sizes;
}

namespace {

std::vector<Dataset> chunk(const Dataset& data, std::span<const std::size_t> order, std::size_t num_batches) {
  std::vector<Dataset> batches;
  std::size_t at = 0;
  for (std::size_t len : balanced_sizes(order.size(), num_batches)) {
    batches.push_back(data.subset(order.subspan(at, len)));
    at += len;
  }
  return batches;
}

}  // namespace

ContinualScenario make_sorted_scenario(const Dataset& train, const Dataset& test, Eigen::Index feature_index,
                                       std::size_t num_batches) {
  if (feature_index < 0 || feature_index >= train.num_features()) {
    throw std::invalid_argument("sort feature index out of range");
  }
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return train.features(static_cast<Eigen::Index>(a), feature_index) <
           train.features(static_cast<Eigen::Index>(b), feature_index);
  });
  ContinualScenario s;
  s.kind = ScenarioKind::kSorted;
  s.batches = chunk(train, order, num_batches);
  s.test = test;
  return s;
}

ContinualScenario make_class_incremental(const Dataset& train, const Dataset& test, int classes_per_task) {
  if (classes_per_task < 1) throw std::invalid_argument("classes per task must be >= 1");
  if (train.num_classes % classes_per_task != 0) {
    throw std::invalid_argument(std::to_string(train.num_classes) + " classes cannot be split into tasks of " +
                                std::to_string(classes_per_task));
  }
  ContinualScenario s;
  s.kind = ScenarioKind::kClassIncremental;
  const int tasks = train.num_classes / classes_per_task;
  for (int t = 0; t < tasks; ++t) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < train.size(); ++i) {
      if (train.labels[i] / classes_per_task == t) rows.push_back(i);
    }
    if (rows.empty()) throw std::invalid_argument("task " + std::to_string(t) + " has no examples");
    s.batches.push_back(train.subset(rows));
  }
  s.test = test;
  return s;
}

ContinualScenario make_iid_incremental(const Dataset& train, const Dataset& test, std::size_t num_batches,
                                       std::uint64_t seed) {
  Rng rng(seed);
  const std::vector<std::size_t> order = rng.permutation(train.size());
  ContinualScenario s;
  s.kind = ScenarioKind::kIidIncremental;
  s.seed = seed;
  s.batches = chunk(train, order, num_batches);
  s.test = test;
  return s;
}

Dataset synth_blobs(std::uint64_t seed, std::size_t n_per_class, int num_classes, Eigen::Index dims, double drift,
                    double radius) {
  if (n_per_class == 0 || num_classes < 1 || dims < 1) throw std::invalid_argument("blob sizes must be positive");
  Rng rng(seed);
  Rng mean_rng = rng.split(1);
  Rng noise_rng = rng.split(2);

  Eigen::MatrixXd means(num_classes, dims);
  if (dims >= num_classes && num_classes > 1) {
    // Centred basis vectors form a regular simplex; rotate it randomly.
    Eigen::MatrixXd vertices = Eigen::MatrixXd::Zero(num_classes, dims);
    for (int c = 0; c < num_classes; ++c) vertices(c, c) = 1.0;
    vertices.rowwise() -= vertices.colwise().mean();
    Eigen::MatrixXd gauss(dims, dims);
    for (Eigen::Index j = 0; j < gauss.size(); ++j) gauss.data()[j] = mean_rng.normal();
    const Eigen::MatrixXd rotation = Eigen::HouseholderQR<Eigen::MatrixXd>(gauss).householderQ();
    means = vertices * rotation;
    for (int c = 0; c < num_classes; ++c) means.row(c) *= radius / means.row(c).norm();
  } else {
    for (int c = 0; c < num_classes; ++c) {
      Eigen::RowVectorXd v(dims);
      for (Eigen::Index j = 0; j < dims; ++j) v(j) = mean_rng.normal();
      means.row(c) = (num_classes == 1) ? Eigen::RowVectorXd::Zero(dims) : Eigen::RowVectorXd(v * (radius / v.norm()));
    }
  }

  Dataset data;
  const std::size_t n = n_per_class * static_cast<std::size_t>(num_classes);
  data.features.resize(static_cast<Eigen::Index>(n), dims);
  data.num_classes = num_classes;
  for (Eigen::Index j = 0; j < dims; ++j) data.feature_names.push_back("x" + std::to_string(j));
  for (int c = 0; c < num_classes; ++c) data.label_names.push_back(std::to_string(c));
  std::size_t row = 0;
  for (int c = 0; c < num_classes; ++c) {
    for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
      const auto r = static_cast<Eigen::Index>(row);
      for (Eigen::Index j = 0; j < dims; ++j) data.features(r, j) = means(c, j) + noise_rng.normal();
      data.features(r, 0) += drift * noise_rng.uniform();
      data.labels.push_back(c);
      data.ids.push_back(row);
    }
  }
  return data;
}

Eigen::MatrixXd class_frequencies(const ContinualScenario& scenario) {
  int k = 0;
  for (const auto& b : scenario.batches) k = std::max(k, b.num_classes);
  Eigen::MatrixXd table = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(scenario.batches.size()), k);
  for (std::size_t t = 0; t < scenario.batches.size(); ++t) {
    const auto& b = scenario.batches[t];
    for (int y : b.labels) table(static_cast<Eigen::Index>(t), y) += 1.0;
    if (!b.empty()) table.row(static_cast<Eigen::Index>(t)) /= static_cast<double>(b.size());
  }
  return table;
}

void write_class_frequencies(const Eigen::MatrixXd& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "batch";
  for (Eigen::Index c = 0; c < table.cols(); ++c) out << ",class_" << c;
  out << '\n';
  char buf[32];
  for (Eigen::Index t = 0; t < table.rows(); ++t) {
    out << t;
    for (Eigen::Index c = 0; c < table.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", table(t, c));
      out << ',' << buf;
    }
    out << '\n';
  }
}

void write_scenario_manifest(const ContinualScenario& scenario, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "kind = " << to_string(scenario.kind) << '\n';
  out << "name = " << scenario.name << '\n';
  out << "seed = " << scenario.seed << '\n';
  out << "num_batches = " << scenario.batches.size() << '\n';
  out << "batch_sizes = ";
  for (std::size_t t = 0; t < scenario.batches.size(); ++t) out << (t ? "," : "") << scenario.batches[t].size();
  out << '\n';
  out << "test_size = " << scenario.test.size() << '\n';
  out << "num_features = " << (scenario.batches.empty() ? 0 : scenario.batches.front().num_features()) << '\n';
  out << "num_classes = " << (scenario.batches.empty() ? 0 : scenario.batches.front().num_classes) << '\n';
}

}  // namespace gmc
