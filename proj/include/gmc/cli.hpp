#pragma once

#include "gmc/config.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace gmc::cli {

inline constexpr int kOk = 0;
inline constexpr int kRuntimeError = 1;
inline constexpr int kUsageError = 2;

struct SelectOptions {
  std::filesystem::path data;
  std::size_t n = 0;
  std::filesystem::path output;
  std::string label_column;
  bool has_header = true;
  std::vector<Eigen::Index> hidden{128, 128};
  std::uint64_t seed = 0;
  std::string embedding = "random_projection";
  Eigen::Index proj_dim = 2000;
  int draws = 4;
  std::string omp_score = "signed";
};

/// Offline gradient-matching coreset of a CSV file; writes row_index,weight
/// in row order. Uses the same seeds and embedding as a GDumb run's first
/// task with that seed.
int cmd_select(const SelectOptions& options, std::ostream& err);

/// Runs the sweep described by the config file plus overrides and writes
/// raw.csv, aggregate.csv, manifest.txt, class_freq_<scenario>.csv and
/// scenario_<scenario>.txt into the output directory.
int cmd_run(const std::filesystem::path& config_path, const config::KeyValues& overrides, std::ostream& err);

/// Reads raw.csv and writes report_final.csv, report_per_task.csv and
/// report_class_freq.csv. The per-task table uses `memory_size` or, when
/// absent, the largest size present.
int cmd_report(const std::filesystem::path& results_dir, std::optional<std::size_t> memory_size, std::ostream& err);

int main(int argc, char** argv);

}  // namespace gmc::cli
