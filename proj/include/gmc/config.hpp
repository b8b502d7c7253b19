#pragma once

#include "gmc/harness.hpp"
#include "gmc/scenarios.hpp"

#include <cstdint>
#include <filesystem>
#include <istream>
#include <string>
#include <utility>
#include <vector>

namespace gmc::config {

/// Fully resolved experiment configuration. Files use flat `key = value`
/// lines, `#` comments and comma-separated lists.
struct RunManifest {
  // scenario
  std::string scenario = "sorted";
  std::string data = "synthetic";
  std::string test_data;
  std::string label_column;
  bool has_header = true;
  std::size_t synth_n_per_class = 500;
  int synth_classes = 4;
  Eigen::Index synth_dims = 8;
  double synth_drift = 4.0;
  double synth_radius = 4.0;
  std::size_t num_batches = 10;
  int classes_per_task = 2;
  Eigen::Index sort_feature = 0;
  double test_fraction = 0.2;
  bool standardize = true;
  std::uint64_t scenario_seed = 0;
  // grid
  std::vector<std::string> methods{"gmc", "reservoir", "class_balance", "sliding_window"};
  std::vector<std::string> paradigms{"gdumb"};
  /// Empty means the default sizes that are feasible for every method.
  std::vector<std::size_t> memory_sizes;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  // learner
  int epochs = 200;
  Eigen::Index batch_size = 100;
  double learning_rate = 1e-3;
  std::vector<Eigen::Index> hidden{128, 128};
  int replay_epochs_per_task = 0;
  // embedding
  std::string embedding = "random_projection";
  Eigen::Index proj_dim = 2000;
  int draws = 4;
  std::string omp_score = "signed";
  // execution
  int jobs = 1;
  bool record_wall_time = false;
  std::string out = "results";

  /// Where the file part came from; not itself a key.
  std::string config_path;
};

inline const std::vector<std::size_t> kDefaultMemorySizes{100, 200, 500, 1000, 2000, 5000};

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// Parses `key = value` lines. Throws ConfigError on malformed lines.
KeyValues parse_key_values(std::istream& in, const std::string& source);

/// Applies entries in order; every unknown key or bad value is appended to
/// `errors` rather than thrown.
void apply(RunManifest& manifest, const KeyValues& entries, std::vector<std::string>& errors);

/// Defaults, then the file (if any), then overrides. Throws ConfigError
/// naming every offending key.
RunManifest load_manifest(const std::filesystem::path& config_path, const KeyValues& overrides);

/// Every key with its resolved value; readable by load_manifest.
void write_manifest(const RunManifest& manifest, const std::filesystem::path& path);
std::vector<std::string> known_keys();

harness::RunConfig run_config(const RunManifest& manifest);
std::vector<harness::Method> methods(const RunManifest& manifest);
std::vector<harness::Paradigm> paradigms(const RunManifest& manifest);

ContinualScenario build_scenario(const RunManifest& manifest);

/// Explicit sizes are checked for feasibility (ConfigError); otherwise the
/// default sizes are filtered to those feasible for every method.
std::vector<std::size_t> resolve_memory_sizes(const RunManifest& manifest, const harness::RunConfig& config,
                                              const nn::MlpArch& arch);

}  // namespace gmc::config
