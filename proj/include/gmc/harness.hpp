#pragma once

#include "gmc/grad_embed.hpp"
#include "gmc/matching_pursuit.hpp"
#include "gmc/memory.hpp"
#include "gmc/nn.hpp"
#include "gmc/scenarios.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace gmc::harness {

enum class Method { kGmc, kGmcLastLayer, kGmcLocal, kReservoir, kClassBalance, kSlidingWindow, kFacilityLocation };
enum class Paradigm { kGdumb, kReplay };

std::string to_string(Method method);
std::string to_string(Paradigm paradigm);
Method parse_method(const std::string& text);
Paradigm parse_paradigm(const std::string& text);
bool is_gradient_matching(Method method);

/// Learner and curation settings shared by every cell of a sweep. Seeds in
/// `train` and `embedding` are replaced by values derived from the run seed.
struct RunConfig {
  nn::TrainConfig train;
  std::vector<Eigen::Index> hidden{128, 128};
  embed::EmbeddingConfig embedding;
  OmpOptions omp;
  /// Replay epochs per task; 0 means max(1, train.epochs / #tasks).
  int replay_epochs_per_task = 0;
  /// Off by default so raw results are byte-reproducible.
  bool record_wall_time = false;
};

/// Every random stream of a run, derived from its seed.
struct RunSeeds {
  std::uint64_t embed_init = 0;
  std::uint64_t projection = 0;
  std::uint64_t memory = 0;
  std::uint64_t model_base = 0;
  std::uint64_t train_base = 0;

  static RunSeeds derive(std::uint64_t seed);
  /// Initialisation seed of the model trained after task t.
  std::uint64_t model(std::size_t task) const { return model_base ^ task; }
  std::uint64_t train(std::size_t task) const { return train_base ^ task; }
};

/// Embedding configuration a gradient-matching method uses for this run.
embed::EmbeddingConfig embedding_for(Method method, const RunConfig& config, const RunSeeds& seeds);
/// Embedding dimension D of a method (0 for methods without embeddings).
Eigen::Index embedding_dim(Method method, const RunConfig& config, const nn::MlpArch& arch);
/// Throws ConfigError when memory_size > D for a gradient-matching method.
void check_feasible(Method method, std::size_t memory_size, const RunConfig& config, const nn::MlpArch& arch);

struct ResultRow {
  std::string scenario;
  Paradigm paradigm = Paradigm::kGdumb;
  Method method = Method::kReservoir;
  std::size_t memory_size = 0;
  std::uint64_t seed = 0;
  std::size_t task_index = 0;
  double test_accuracy = 0.0;
  double wall_time_s = 0.0;
};

struct RunResult {
  std::vector<ResultRow> rows;
  /// False when a task failed; `rows` then holds the tasks before it.
  bool complete = true;
  std::string error;
};

/// Optional hooks into a run, for tracing and testing.
struct RunObserver {
  std::function<void(std::size_t task, const nn::MlpParams& params)> on_task_start;
  std::function<void(std::size_t task, const memory::RehearsalMemory& memory)> on_memory_update;
  std::function<void(std::size_t task, const nn::MlpParams& params)> on_task_end;
  /// Local gradient matching re-embedded memory and batch at these params.
  std::function<void(std::size_t task, const nn::MlpParams& params)> on_local_embed;
};

/// Owns one method's memory and whatever state its update rule needs.
class MemoryCurator {
 public:
  MemoryCurator(Method method, std::size_t capacity, const RunConfig& config, const nn::MlpArch& arch,
                const RunSeeds& seeds);

  /// `current` is the latest model, used only by local gradient matching.
  void update(const Dataset& batch, std::size_t task, const nn::MlpParams& current, const RunObserver* observer);
  const memory::RehearsalMemory& memory() const { return memory_; }

 private:
  Method method_;
  std::size_t capacity_;
  RunConfig config_;
  nn::MlpArch arch_;
  RunSeeds seeds_;
  memory::RehearsalMemory memory_;
  memory::SieveState sieve_;
  Rng rng_;
  std::optional<embed::Embedder> embedder_;
};

/// GDumb: after each batch update the memory, reinitialise the model, train
/// from scratch on the weighted memory, evaluate on the full test set.
RunResult run_gdumb(const ContinualScenario& scenario, Method method, std::size_t memory_size, const RunConfig& config,
                    std::uint64_t seed, const RunObserver* observer = nullptr);

/// Experience replay: one model for the whole stream, trained per task on
/// minibatches mixing half current batch and half memory, memory updated
/// after training.
RunResult run_replay(const ContinualScenario& scenario, Method method, std::size_t memory_size, const RunConfig& config,
                     std::uint64_t seed, const RunObserver* observer = nullptr);

RunResult run(Paradigm paradigm, const ContinualScenario& scenario, Method method, std::size_t memory_size,
              const RunConfig& config, std::uint64_t seed, const RunObserver* observer = nullptr);

struct AggregateRow {
  std::string scenario;
  Paradigm paradigm = Paradigm::kGdumb;
  Method method = Method::kReservoir;
  std::size_t memory_size = 0;
  double mean_final_acc = 0.0;
  double std_final_acc = 0.0;
  std::size_t num_seeds = 0;
};

/// Mean and population standard deviation of the final-task accuracy per
/// (scenario, paradigm, method, memory size), in first-appearance order.
std::vector<AggregateRow> aggregate(const std::vector<ResultRow>& rows);

struct SweepGrid {
  const ContinualScenario* scenario = nullptr;
  std::vector<Paradigm> paradigms{Paradigm::kGdumb};
  std::vector<Method> methods;
  std::vector<std::size_t> memory_sizes;
  std::vector<std::uint64_t> seeds;
  RunConfig config;
  int jobs = 1;
};

struct CellFailure {
  Paradigm paradigm;
  Method method;
  std::size_t memory_size;
  std::uint64_t seed;
  std::string message;
};

struct SweepResult {
  std::vector<ResultRow> rows;
  std::vector<AggregateRow> aggregate;
  std::vector<CellFailure> failures;
};

/// Runs every (paradigm, method, memory size, seed) cell, up to `jobs` at a
/// time. Rows come out in cell order whatever the execution order.
SweepResult sweep(const SweepGrid& grid);

void write_raw_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path);
std::vector<ResultRow> read_raw_csv(const std::filesystem::path& path);
void write_aggregate_csv(const std::vector<AggregateRow>& rows, const std::filesystem::path& path);
std::vector<AggregateRow> read_aggregate_csv(const std::filesystem::path& path);

}  // namespace gmc::harness
