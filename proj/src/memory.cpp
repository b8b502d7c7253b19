#include "gmc/memory.hpp"

#include "gmc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace gmc::memory {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void append_item(RehearsalMemory& m, const Dataset& batch, std::size_t row) {
  m.examples.append_row(batch, row);
  m.weights.push_back(1.0);
}

void replace_item(RehearsalMemory& m, std::size_t slot, const Dataset& batch, std::size_t row) {
  m.examples.features.row(static_cast<Eigen::Index>(slot)) = batch.features.row(static_cast<Eigen::Index>(row));
  m.examples.labels[slot] = batch.labels[row];
  m.examples.ids[slot] = batch.ids[row];
  m.weights[slot] = 1.0;
}

void erase_item(RehearsalMemory& m, std::size_t slot) {
  std::vector<std::size_t> keep;
  keep.reserve(m.size() - 1);
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (i != slot) keep.push_back(i);
  }
  m.examples = m.examples.subset(keep);
  m.weights.erase(m.weights.begin() + static_cast<std::ptrdiff_t>(slot));
}

void check_capacity(std::size_t n) {
  if (n < 1) throw std::invalid_argument("memory capacity must be >= 1");
}

// Memory over the dictionary [stored, batch] restricted to `sel`, kept in
// dictionary order.
RehearsalMemory rebuild_from_selection(const RehearsalMemory& memory, const Dataset& batch,
                                       const GradientMatrix& dictionary, CoresetSelection sel) {
  std::vector<std::size_t> order(sel.size());
  for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sel.indices[a] < sel.indices[b]; });

  RehearsalMemory out;
  out.capacity = memory.capacity;
  out.seen = memory.seen;
  out.classes_seen = memory.classes_seen;
  out.examples = batch.empty_like();
  std::vector<Index> columns;
  const auto stored = static_cast<Index>(memory.size());
  for (std::size_t j : order) {
    const Index k = sel.indices[j];
    columns.push_back(k);
    if (k < stored) {
      out.examples.append_row(memory.examples, static_cast<std::size_t>(k));
    } else {
      out.examples.append_row(batch, static_cast<std::size_t>(k - stored));
    }
    out.weights.push_back(sel.weights(static_cast<Index>(j)));
  }
  out.embeddings = dictionary.select(columns);
  out.last_selection = std::move(sel);
  return out;
}

}  // namespace

void RehearsalMemory::validate() const {
  if (weights.size() != examples.size()) throw std::logic_error("memory weights misaligned with examples");
  if (size() > capacity) throw std::logic_error("memory exceeds its capacity");
  if (!embeddings.empty() && static_cast<std::size_t>(embeddings.cols()) != size()) {
    throw std::logic_error("memory embeddings misaligned with examples");
  }
  if (target.size() > 0 && !target.allFinite()) throw std::logic_error("memory target is not finite");
}

RehearsalMemory make_memory(std::size_t capacity) {
  check_capacity(capacity);
  RehearsalMemory m;
  m.capacity = capacity;
  return m;
}

RehearsalMemory gmc_update(const RehearsalMemory& memory, const Dataset& batch, const GradientMatrix& batch_embeddings,
                           std::size_t n, const OmpOptions& options) {
  check_capacity(n);
  if (static_cast<std::size_t>(batch_embeddings.cols()) != batch.size()) {
    throw DimensionError("batch embeddings have " + std::to_string(batch_embeddings.cols()) + " columns for " +
                         std::to_string(batch.size()) + " examples");
  }
  if (memory.target.size() > 0 && memory.target.size() != batch_embeddings.dims()) {
    throw DimensionError("batch embedding dimension " + std::to_string(batch_embeddings.dims()) +
                         " differs from the memory's " + std::to_string(memory.target.size()));
  }
  if (!memory.embeddings.empty() && memory.embeddings.dims() != batch_embeddings.dims()) {
    throw DimensionError("stored embedding dimension differs from the batch");
  }

  Eigen::VectorXd target = memory.target.size() > 0 ? memory.target : Eigen::VectorXd::Zero(batch_embeddings.dims());
  target += batch_embeddings.column_sum();

  const GradientMatrix dictionary = GradientMatrix::concat(memory.embeddings, batch_embeddings);
  const Index budget = std::min<Index>(static_cast<Index>(n), dictionary.cols());
  CoresetSelection sel = omp_select(dictionary, target, budget, options);

  RehearsalMemory out = rebuild_from_selection(memory, batch, dictionary, std::move(sel));
  out.capacity = n;
  out.target = std::move(target);
  out.seen = memory.seen + batch.size();
  out.classes_seen.insert(batch.labels.begin(), batch.labels.end());
  return out;
}

RehearsalMemory reservoir_update(const RehearsalMemory& memory, const Dataset& batch, std::size_t n, Rng& rng) {
  check_capacity(n);
  RehearsalMemory m = memory;
  m.capacity = n;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    ++m.seen;
    m.classes_seen.insert(batch.labels[i]);
    if (m.size() < n) {
      append_item(m, batch, i);
    } else {
      const std::uint64_t j = rng.below(m.seen);
      if (j < n) replace_item(m, static_cast<std::size_t>(j), batch, i);
    }
  }
  return m;
}

RehearsalMemory class_balance_update(const RehearsalMemory& memory, const Dataset& batch, std::size_t n, Rng& rng) {
  check_capacity(n);
  RehearsalMemory m = memory;
  m.capacity = n;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const int y = batch.labels[i];
    ++m.seen;
    m.classes_seen.insert(y);
    if (m.size() < n) {
      append_item(m, batch, i);
      continue;
    }
    std::vector<std::size_t> counts(static_cast<std::size_t>(std::max(batch.num_classes, y + 1)), 0);
    for (int label : m.examples.labels) {
      if (static_cast<std::size_t>(label) >= counts.size()) counts.resize(static_cast<std::size_t>(label) + 1, 0);
      ++counts[static_cast<std::size_t>(label)];
    }
    const std::size_t quota = n / m.classes_seen.size();
    if (counts[static_cast<std::size_t>(y)] >= quota) continue;

    const auto largest = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    std::vector<std::size_t> slots;
    for (std::size_t s = 0; s < m.size(); ++s) {
      if (m.examples.labels[s] == largest) slots.push_back(s);
    }
    erase_item(m, slots[rng.below(slots.size())]);
    append_item(m, batch, i);
  }
  return m;
}

RehearsalMemory sliding_window_update(const RehearsalMemory& memory, const Dataset& batch, std::size_t n) {
  check_capacity(n);
  RehearsalMemory m = memory;
  m.capacity = n;
  if (m.examples.features.cols() == 0 && m.examples.empty()) m.examples = batch.empty_like();
  m.examples.append(batch);
  m.weights.assign(m.examples.size(), 1.0);
  m.seen += batch.size();
  m.classes_seen.insert(batch.labels.begin(), batch.labels.end());
  if (m.size() > n) {
    std::vector<std::size_t> tail(n);
    for (std::size_t j = 0; j < n; ++j) tail[j] = m.size() - n + j;
    m.examples = m.examples.subset(tail);
    m.weights.assign(n, 1.0);
  }
  return m;
}

double SieveState::objective(std::span<const std::size_t> members) const {
  if (members.empty()) return 0.0;
  const double b = bound();
  double total = 0.0;
  for (std::size_t y = 0; y < seen.size(); ++y) {
    double best = kInf;
    for (std::size_t c : members) {
      best = std::min(best, (seen.features.row(static_cast<Eigen::Index>(y)) -
                             seen.features.row(static_cast<Eigen::Index>(c)))
                                .norm());
    }
    total += b - best;
  }
  return total;
}

double SieveState::marginal_gain(std::span<const std::size_t> members, std::size_t candidate) const {
  std::vector<std::size_t> with(members.begin(), members.end());
  with.push_back(candidate);
  return objective(with) - objective(members);
}

namespace {

double threshold(const SieveState& state, int exponent) { return std::pow(1.0 + state.epsilon, exponent); }

// Keeps exactly the thresholds (1+eps)^j within [m, 2 n m].
void refresh_sieves(SieveState& state, std::size_t n) {
  if (!(state.max_gain > 0.0)) return;
  const double base = std::log1p(state.epsilon);
  const int lo = static_cast<int>(std::ceil(std::log(state.max_gain) / base - 1e-12));
  const int hi = static_cast<int>(std::floor(std::log(2.0 * static_cast<double>(n) * state.max_gain) / base + 1e-12));
  std::vector<SieveState::Sieve> next;
  for (int j = lo; j <= hi; ++j) {
    auto it = std::find_if(state.sieves.begin(), state.sieves.end(),
                           [j](const SieveState::Sieve& s) { return s.exponent == j; });
    if (it != state.sieves.end()) {
      next.push_back(std::move(*it));
    } else {
      SieveState::Sieve s;
      s.exponent = j;
      s.min_dist.assign(state.seen.size(), kInf);
      next.push_back(std::move(s));
    }
  }
  state.sieves = std::move(next);
}

}  // namespace

RehearsalMemory facility_location_update(SieveState& state, const Dataset& batch, std::size_t n) {
  check_capacity(n);
  if (!batch.features.allFinite()) throw NumericalError("facility location needs finite features");

  for (std::size_t i = 0; i < batch.size(); ++i) {
    state.seen.append_row(batch, i);
    const std::size_t q = state.seen.size() - 1;
    const auto x = state.seen.features.row(static_cast<Eigen::Index>(q));
    state.max_norm = std::max(state.max_norm, x.norm());
    const double b = state.bound();

    Eigen::VectorXd dist(static_cast<Eigen::Index>(q + 1));
    for (std::size_t y = 0; y <= q; ++y) {
      dist(static_cast<Eigen::Index>(y)) = (state.seen.features.row(static_cast<Eigen::Index>(y)) - x).norm();
    }

    // Cover the new point with each sieve's existing members.
    for (auto& s : state.sieves) {
      double best = kInf;
      for (std::size_t c : s.members) best = std::min(best, dist(static_cast<Eigen::Index>(c)));
      s.min_dist.push_back(best);
    }

    const double singleton = static_cast<double>(q + 1) * b - dist.sum();
    state.max_gain = std::max(state.max_gain, singleton);
    refresh_sieves(state, n);

    for (auto& s : state.sieves) {
      if (s.members.size() >= n) continue;
      double value = 0.0;
      double gain = 0.0;
      for (std::size_t y = 0; y <= q; ++y) {
        const double md = s.min_dist[y];
        const double d = dist(static_cast<Eigen::Index>(y));
        if (md == kInf) {
          gain += b - d;
        } else {
          value += b - md;
          gain += std::max(0.0, md - d);
        }
      }
      const double need = (threshold(state, s.exponent) / 2.0 - value) / static_cast<double>(n - s.members.size());
      if (gain >= need) {
        s.members.push_back(q);
        for (std::size_t y = 0; y <= q; ++y) s.min_dist[y] = std::min(s.min_dist[y], dist(static_cast<Eigen::Index>(y)));
      }
    }
  }

  RehearsalMemory out;
  out.capacity = n;
  out.seen = state.seen.size();
  out.classes_seen.insert(state.seen.labels.begin(), state.seen.labels.end());
  std::vector<std::size_t> chosen;
  if (state.seen.size() <= n) {
    chosen.resize(state.seen.size());
    for (std::size_t j = 0; j < chosen.size(); ++j) chosen[j] = j;
  } else {
    const double b = state.bound();
    double best = -kInf;
    for (const auto& s : state.sieves) {
      double value = 0.0;
      for (double md : s.min_dist) {
        if (md != kInf) value += b - md;
      }
      if (value > best) {
        best = value;
        chosen = s.members;
      }
    }
  }
  out.examples = state.seen.subset(chosen);
  out.weights.assign(chosen.size(), 1.0);
  return out;
}

RehearsalMemory local_gmc_update(const RehearsalMemory& memory, const Dataset& batch, const nn::MlpParams& current_params,
                                 std::size_t n, const LocalGmcConfig& config) {
  check_capacity(n);
  Dataset pool = memory.examples.empty() ? batch.empty_like() : memory.examples;
  pool.append(batch);

  const embed::Embedder embedder(config.arch, config.embedding, {current_params});
  const GradientMatrix columns = embedder.embed(pool);

  Eigen::VectorXd coeffs = Eigen::VectorXd::Ones(columns.cols());
  for (std::size_t i = 0; i < memory.size(); ++i) coeffs(static_cast<Index>(i)) = memory.weights[i];
  Eigen::VectorXd target = columns.data() * coeffs;

  const Index budget = std::min<Index>(static_cast<Index>(n), columns.cols());
  CoresetSelection sel = omp_select(columns, target, budget, config.omp);

  // Dictionary order equals pool order: stored examples, then the batch.
  RehearsalMemory stored = memory;
  stored.embeddings = GradientMatrix();
  RehearsalMemory out = rebuild_from_selection(stored, batch, columns, std::move(sel));
  out.capacity = n;
  out.target = std::move(target);
  out.seen = memory.seen + batch.size();
  out.classes_seen.insert(batch.labels.begin(), batch.labels.end());
  return out;
}

namespace {

constexpr char kMagic[8] = {'G', 'M', 'C', 'S', 'N', 'A', 'P', '1'};

void put_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint64_t get_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw std::runtime_error("truncated memory snapshot");
  return v;
}

void put_doubles(std::ostream& out, const double* data, std::size_t count) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
}

void get_doubles(std::istream& in, double* data, std::size_t count) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw std::runtime_error("truncated memory snapshot");
}

std::filesystem::path with_suffix(const std::filesystem::path& prefix, const char* suffix) {
  return std::filesystem::path(prefix.string() + suffix);
}

}  // namespace

void save_snapshot(const RehearsalMemory& memory, const std::filesystem::path& prefix) {
  memory.validate();
  {
    std::ofstream csv(with_suffix(prefix, ".csv"));
    if (!csv) throw std::runtime_error("cannot write " + with_suffix(prefix, ".csv").string());
    csv << "id,label,weight";
    for (Eigen::Index j = 0; j < memory.examples.num_features(); ++j) csv << ",f" << j;
    csv << '\n';
    char buf[32];
    for (std::size_t i = 0; i < memory.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", memory.weights[i]);
      csv << memory.examples.ids[i] << ',' << memory.examples.labels[i] << ',' << buf;
      for (Eigen::Index j = 0; j < memory.examples.num_features(); ++j) {
        std::snprintf(buf, sizeof buf, "%.17g", memory.examples.features(static_cast<Eigen::Index>(i), j));
        csv << ',' << buf;
      }
      csv << '\n';
    }
  }
  std::ofstream bin(with_suffix(prefix, ".bin"), std::ios::binary);
  if (!bin) throw std::runtime_error("cannot write " + with_suffix(prefix, ".bin").string());
  bin.write(kMagic, sizeof kMagic);
  put_u64(bin, memory.capacity);
  put_u64(bin, memory.seen);
  put_u64(bin, static_cast<std::uint64_t>(memory.examples.num_classes));
  put_u64(bin, static_cast<std::uint64_t>(memory.examples.num_features()));
  put_u64(bin, memory.classes_seen.size());
  for (int c : memory.classes_seen) put_u64(bin, static_cast<std::uint64_t>(c));
  put_u64(bin, static_cast<std::uint64_t>(memory.target.size()));
  put_doubles(bin, memory.target.data(), static_cast<std::size_t>(memory.target.size()));
  put_u64(bin, static_cast<std::uint64_t>(memory.embeddings.dims()));
  put_u64(bin, static_cast<std::uint64_t>(memory.embeddings.cols()));
  put_doubles(bin, memory.embeddings.data().data(), static_cast<std::size_t>(memory.embeddings.data().size()));
}

RehearsalMemory load_snapshot(const std::filesystem::path& prefix) {
  std::ifstream bin(with_suffix(prefix, ".bin"), std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open " + with_suffix(prefix, ".bin").string());
  char magic[8];
  bin.read(magic, sizeof magic);
  if (!bin || std::memcmp(magic, kMagic, sizeof magic) != 0) throw std::runtime_error("not a memory snapshot");

  RehearsalMemory m;
  m.capacity = get_u64(bin);
  m.seen = get_u64(bin);
  const auto num_classes = static_cast<int>(get_u64(bin));
  const auto num_features = static_cast<Eigen::Index>(get_u64(bin));
  const std::uint64_t n_classes_seen = get_u64(bin);
  for (std::uint64_t i = 0; i < n_classes_seen; ++i) m.classes_seen.insert(static_cast<int>(get_u64(bin)));
  m.target.resize(static_cast<Eigen::Index>(get_u64(bin)));
  get_doubles(bin, m.target.data(), static_cast<std::size_t>(m.target.size()));
  const auto rows = static_cast<Eigen::Index>(get_u64(bin));
  const auto cols = static_cast<Eigen::Index>(get_u64(bin));
  if (cols > 0) {
    Eigen::MatrixXd emb(rows, cols);
    get_doubles(bin, emb.data(), static_cast<std::size_t>(emb.size()));
    m.embeddings = GradientMatrix(std::move(emb));
  }

  std::ifstream csv(with_suffix(prefix, ".csv"));
  if (!csv) throw std::runtime_error("cannot open " + with_suffix(prefix, ".csv").string());
  std::string line;
  std::getline(csv, line);
  m.examples.num_classes = num_classes;
  m.examples.features.resize(0, num_features);
  std::vector<double> values;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    m.examples.ids.push_back(std::stoull(cell));
    std::getline(row, cell, ',');
    m.examples.labels.push_back(std::stoi(cell));
    std::getline(row, cell, ',');
    m.weights.push_back(std::stod(cell));
    values.clear();
    while (std::getline(row, cell, ',')) values.push_back(std::stod(cell));
    if (static_cast<Eigen::Index>(values.size()) != num_features) throw std::runtime_error("snapshot row has wrong width");
    const Eigen::Index r = m.examples.features.rows();
    m.examples.features.conservativeResize(r + 1, Eigen::NoChange);
    for (Eigen::Index j = 0; j < num_features; ++j) m.examples.features(r, j) = values[static_cast<std::size_t>(j)];
  }
  m.validate();
  return m;
}

}  // namespace gmc::memory
