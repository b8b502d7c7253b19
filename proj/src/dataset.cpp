#include "gmc/dataset.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gmc {

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out = empty_like();
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.labels.reserve(rows.size());
  out.ids.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= size()) throw std::out_of_range("dataset row out of range");
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(rows[i]));
    out.labels.push_back(labels[rows[i]]);
    out.ids.push_back(ids[rows[i]]);
  }
  return out;
}

Dataset Dataset::empty_like() const {
  Dataset out;
  out.features.resize(0, features.cols());
  out.num_classes = num_classes;
  out.feature_names = feature_names;
  out.label_names = label_names;
  return out;
}

void Dataset::append(const Dataset& other) {
  if (other.empty()) return;
  if (empty() && features.cols() == 0) {
    *this = other;
    return;
  }
  if (other.features.cols() != features.cols()) throw std::invalid_argument("feature count mismatch in append");
  const Eigen::Index old = features.rows();
  features.conservativeResize(old + other.features.rows(), Eigen::NoChange);
  features.bottomRows(other.features.rows()) = other.features;
  labels.insert(labels.end(), other.labels.begin(), other.labels.end());
  ids.insert(ids.end(), other.ids.begin(), other.ids.end());
}

void Dataset::append_row(const Dataset& other, std::size_t row) {
  if (features.cols() == 0 && empty()) {
    *this = other.empty_like();
  }
  if (other.features.cols() != features.cols()) throw std::invalid_argument("feature count mismatch in append");
  const Eigen::Index old = features.rows();
  features.conservativeResize(old + 1, Eigen::NoChange);
  features.row(old) = other.features.row(static_cast<Eigen::Index>(row));
  labels.push_back(other.labels[row]);
  ids.push_back(other.ids[row]);
}

void Dataset::validate() const {
  if (static_cast<std::size_t>(features.rows()) != labels.size() || ids.size() != labels.size()) {
    throw std::invalid_argument("dataset rows, labels and ids disagree in length");
  }
  if (num_classes < 1) throw std::invalid_argument("dataset needs at least one class");
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw std::invalid_argument("label out of range");
  }
  if (!features.allFinite()) throw std::invalid_argument("dataset contains non-finite features");
}

std::optional<int> LabelMap::find(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<int>(i);
  }
  return std::nullopt;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    const auto first = cell.find_first_not_of(" \t\r");
    const auto last = cell.find_last_not_of(" \t\r");
    cells.push_back(first == std::string::npos ? std::string() : cell.substr(first, last - first + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

bool parse_double(const std::string& text, double& value) {
  if (text.empty()) return false;
  const char* begin = text.data();
  const char* end = begin + text.size();
  if (*begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  return ec == std::errc() && ptr == end;
}

bool blank(const std::string& line) { return line.find_first_not_of(" \t\r") == std::string::npos; }

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());

  std::string line;
  std::vector<std::string> header;
  std::size_t line_no = 0;
  if (options.has_header) {
    while (std::getline(in, line)) {
      ++line_no;
      if (!blank(line)) break;
    }
    if (blank(line)) throw std::runtime_error(path.string() + ": missing header");
    header = split_csv_line(line);
  }

  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    rows.push_back(split_csv_line(line));
    const std::size_t expected = header.empty() ? rows.front().size() : header.size();
    if (rows.back().size() != expected) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected " +
                               std::to_string(expected) + " cells, found " + std::to_string(rows.back().size()));
    }
  }
  if (rows.empty()) throw std::runtime_error(path.string() + ": no data rows");

  const std::size_t width = rows.front().size();
  if (width < 2) throw std::runtime_error(path.string() + ": need at least one feature and a label column");

  std::size_t label_col = width - 1;
  if (!options.label_column.empty()) {
    bool found = false;
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (header[j] == options.label_column) {
        label_col = j;
        found = true;
        break;
      }
    }
    if (!found) {
      std::size_t idx = 0;
      auto [ptr, ec] = std::from_chars(options.label_column.data(),
                                       options.label_column.data() + options.label_column.size(), idx);
      if (ec != std::errc() || ptr != options.label_column.data() + options.label_column.size() || idx >= width) {
        throw std::runtime_error(path.string() + ": unknown label column '" + options.label_column + "'");
      }
      label_col = idx;
    }
  }

  Dataset data;
  data.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width - 1));
  data.labels.reserve(rows.size());
  data.ids.reserve(rows.size());
  LabelMap seen;
  if (options.labels != nullptr) seen = *options.labels;

  for (std::size_t j = 0; j < width; ++j) {
    if (j == label_col) continue;
    data.feature_names.push_back(header.empty() ? "f" + std::to_string(data.feature_names.size()) : header[j]);
  }

  for (std::size_t i = 0; i < rows.size(); ++i) {
    Eigen::Index f = 0;
    for (std::size_t j = 0; j < width; ++j) {
      if (j == label_col) continue;
      double v = 0.0;
      if (!parse_double(rows[i][j], v)) {
        throw std::runtime_error(path.string() + ": row " + std::to_string(i) + ", column " + std::to_string(j) +
                                 ": non-numeric feature '" + rows[i][j] + "'");
      }
      data.features(static_cast<Eigen::Index>(i), f++) = v;
    }
    const std::string& name = rows[i][label_col];
    auto cls = seen.find(name);
    if (!cls) {
      if (options.labels != nullptr) {
        throw std::runtime_error(path.string() + ": row " + std::to_string(i) + ": unseen label '" + name + "'");
      }
      seen.names.push_back(name);
      cls = static_cast<int>(seen.names.size() - 1);
    }
    data.labels.push_back(*cls);
    data.ids.push_back(i);
  }
  data.label_names = seen.names;
  data.num_classes = static_cast<int>(seen.names.size());
  data.validate();
  return data;
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (Eigen::Index j = 0; j < data.features.cols(); ++j) {
    out << (static_cast<std::size_t>(j) < data.feature_names.size() ? data.feature_names[static_cast<std::size_t>(j)]
                                                                    : "f" + std::to_string(j))
        << ',';
  }
  out << "label\n";
  char buf[32];
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (Eigen::Index j = 0; j < data.features.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", data.features(static_cast<Eigen::Index>(i), j));
      out << buf << ',';
    }
    const int y = data.labels[i];
    out << (static_cast<std::size_t>(y) < data.label_names.size() ? data.label_names[static_cast<std::size_t>(y)]
                                                                 : std::to_string(y))
        << '\n';
  }
}

}  // namespace gmc
