#pragma once

#include "gmc/dataset.hpp"
#include "gmc/grad_embed.hpp"
#include "gmc/matching_pursuit.hpp"
#include "gmc/nn.hpp"
#include "gmc/rng.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <optional>
#include <set>
#include <vector>

namespace gmc::memory {

/// Bounded rehearsal store. Unweighted strategies keep weight 1.0 and leave
/// `embeddings` and `target` empty.
struct RehearsalMemory {
  Dataset examples;
  std::vector<double> weights;
  /// Embedding columns aligned with `examples` (gradient-matching only).
  GradientMatrix embeddings;
  /// Running sum of every embedding column seen so far.
  Eigen::VectorXd target;
  std::size_t capacity = 0;
  /// Stream items observed so far.
  std::size_t seen = 0;
  /// Distinct labels observed so far.
  std::set<int> classes_seen;
  /// Most recent OMP result, indices into the dictionary [old memory, batch]
  /// in selection order.
  std::optional<CoresetSelection> last_selection;

  std::size_t size() const { return examples.size(); }
  void validate() const;
};

RehearsalMemory make_memory(std::size_t capacity);

/// Continual gradient-matching update: target += column sum of the batch
/// embeddings, then OMP over [stored columns, batch columns] keeps at most n
/// of them. Memory keeps the survivors in dictionary order (stored first,
/// then batch) with their refit weights.
RehearsalMemory gmc_update(const RehearsalMemory& memory, const Dataset& batch, const GradientMatrix& batch_embeddings,
                           std::size_t n, const OmpOptions& options = {});

/// Classic reservoir sampling (Algorithm R) over the global stream.
RehearsalMemory reservoir_update(const RehearsalMemory& memory, const Dataset& batch, std::size_t n, Rng& rng);

/// Greedy class balancing: fill while there is room; afterwards an item whose
/// class holds fewer than floor(n / classes seen) slots evicts a random
/// member of the largest class (lowest label on ties).
RehearsalMemory class_balance_update(const RehearsalMemory& memory, const Dataset& batch, std::size_t n, Rng& rng);

/// The n most recent items in arrival order.
RehearsalMemory sliding_window_update(const RehearsalMemory& memory, const Dataset& batch, std::size_t n);

/// Sieve-streaming state for facility location in feature space,
/// F(C) = sum_{x in T} max_{c in C} (B - ||x - c||) over all seen points T.
struct SieveState {
  struct Sieve {
    int exponent = 0;                  // threshold (1 + epsilon)^exponent
    std::vector<std::size_t> members;  // rows of `seen`
    std::vector<double> min_dist;      // per seen row; +inf when uncovered
  };

  double epsilon = 0.1;
  double max_norm = 0.0;
  /// Largest singleton gain observed.
  double max_gain = 0.0;
  Dataset seen;
  std::vector<Sieve> sieves;

  /// Current similarity offset B (twice the largest feature norm seen).
  double bound() const { return 2.0 * max_norm; }
  /// F(members) over the seen points.
  double objective(std::span<const std::size_t> members) const;
  /// F(members + {candidate}) - F(members).
  double marginal_gain(std::span<const std::size_t> members, std::size_t candidate) const;
};

/// Feeds the batch through the sieves; memory is the best candidate set (or
/// every seen point while they all fit).
RehearsalMemory facility_location_update(SieveState& state, const Dataset& batch, std::size_t n);

struct LocalGmcConfig {
  nn::MlpArch arch;
  embed::EmbeddingConfig embedding;
  OmpOptions omp;
};

/// Gradient matching at the current iterate: re-embeds stored and batch
/// examples with a single draw at `current_params` and matches
/// sum_i w_i c_i (stored weights, batch weight 1).
RehearsalMemory local_gmc_update(const RehearsalMemory& memory, const Dataset& batch, const nn::MlpParams& current_params,
                                 std::size_t n, const LocalGmcConfig& config);

/// Writes `<prefix>.csv` (id,label,weight,features...) and `<prefix>.bin`
/// (header, target vector, embedding columns).
void save_snapshot(const RehearsalMemory& memory, const std::filesystem::path& prefix);
RehearsalMemory load_snapshot(const std::filesystem::path& prefix);

}  // namespace gmc::memory
