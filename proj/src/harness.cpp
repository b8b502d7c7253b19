#include "gmc/harness.hpp"

#include "gmc/errors.hpp"
#include "gmc/rng.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace gmc::harness {

std::string to_string(Method method) {
  switch (method) {
    case Method::kGmc:
      return "gmc";
    case Method::kGmcLastLayer:
      return "gmc_last_layer";
    case Method::kGmcLocal:
      return "gmc_local";
    case Method::kReservoir:
      return "reservoir";
    case Method::kClassBalance:
      return "class_balance";
    case Method::kSlidingWindow:
      return "sliding_window";
    case Method::kFacilityLocation:
      return "facility_location";
  }
  return "unknown";
}

std::string to_string(Paradigm paradigm) { return paradigm == Paradigm::kGdumb ? "gdumb" : "replay"; }

Method parse_method(const std::string& text) {
  for (Method m : {Method::kGmc, Method::kGmcLastLayer, Method::kGmcLocal, Method::kReservoir, Method::kClassBalance,
                   Method::kSlidingWindow, Method::kFacilityLocation}) {
    if (to_string(m) == text) return m;
  }
  throw std::invalid_argument("unknown method '" + text + "'");
}

Paradigm parse_paradigm(const std::string& text) {
  if (text == "gdumb") return Paradigm::kGdumb;
  if (text == "replay") return Paradigm::kReplay;
  throw std::invalid_argument("unknown paradigm '" + text + "'");
}

bool is_gradient_matching(Method method) {
  return method == Method::kGmc || method == Method::kGmcLastLayer || method == Method::kGmcLocal;
}

RunSeeds RunSeeds::derive(std::uint64_t seed) {
  return RunSeeds{derive_seed(seed, 1), derive_seed(seed, 2), derive_seed(seed, 3), derive_seed(seed, 4),
                  derive_seed(seed, 5)};
}

embed::EmbeddingConfig embedding_for(Method method, const RunConfig& config, const RunSeeds& seeds) {
  embed::EmbeddingConfig e = config.embedding;
  e.init_seed = seeds.embed_init;
  e.projection_seed = seeds.projection;
  if (method == Method::kGmcLastLayer) e.mode = embed::Mode::kLastLayer;
  if (method == Method::kGmcLocal) e.draws = 1;
  return e;
}

Eigen::Index embedding_dim(Method method, const RunConfig& config, const nn::MlpArch& arch) {
  if (!is_gradient_matching(method)) return 0;
  return embedding_for(method, config, RunSeeds{}).dim(arch);
}

void check_feasible(Method method, std::size_t memory_size, const RunConfig& config, const nn::MlpArch& arch) {
  if (memory_size < 1) throw ConfigError("memory size must be >= 1");
  if (!is_gradient_matching(method)) return;
  const Eigen::Index d = embedding_dim(method, config, arch);
  if (static_cast<Eigen::Index>(memory_size) > d) {
    throw ConfigError("memory size " + std::to_string(memory_size) + " exceeds the embedding dimension D=" +
                      std::to_string(d) + " of method " + to_string(method) + "; gradient matching requires D >= n");
  }
}

MemoryCurator::MemoryCurator(Method method, std::size_t capacity, const RunConfig& config, const nn::MlpArch& arch,
                             const RunSeeds& seeds)
    : method_(method),
      capacity_(capacity),
      config_(config),
      arch_(arch),
      seeds_(seeds),
      memory_(memory::make_memory(capacity)),
      rng_(seeds.memory) {
  if (method == Method::kGmc || method == Method::kGmcLastLayer) {
    embedder_.emplace(arch_, embedding_for(method, config_, seeds_));
  }
}

void MemoryCurator::update(const Dataset& batch, std::size_t task, const nn::MlpParams& current,
                           const RunObserver* observer) {
  switch (method_) {
    case Method::kGmc:
    case Method::kGmcLastLayer:
      memory_ = memory::gmc_update(memory_, batch, embedder_->embed(batch), capacity_, config_.omp);
      break;
    case Method::kGmcLocal: {
      memory::LocalGmcConfig local{arch_, embedding_for(method_, config_, seeds_), config_.omp};
      memory_ = memory::local_gmc_update(memory_, batch, current, capacity_, local);
      if (observer && observer->on_local_embed) observer->on_local_embed(task, current);
      break;
    }
    case Method::kReservoir:
      memory_ = memory::reservoir_update(memory_, batch, capacity_, rng_);
      break;
    case Method::kClassBalance:
      memory_ = memory::class_balance_update(memory_, batch, capacity_, rng_);
      break;
    case Method::kSlidingWindow:
      memory_ = memory::sliding_window_update(memory_, batch, capacity_);
      break;
    case Method::kFacilityLocation:
      memory_ = memory::facility_location_update(sieve_, batch, capacity_);
      break;
  }
  memory_.validate();
  if (observer && observer->on_memory_update) observer->on_memory_update(task, memory_);
}

namespace {

using Clock = std::chrono::steady_clock;

ResultRow make_row(const ContinualScenario& scenario, Paradigm paradigm, Method method, std::size_t memory_size,
                   std::uint64_t seed, std::size_t task, double accuracy, Clock::time_point start,
                   const RunConfig& config) {
  ResultRow row{scenario.name, paradigm, method, memory_size, seed, task, accuracy, 0.0};
  if (config.record_wall_time) row.wall_time_s = std::chrono::duration<double>(Clock::now() - start).count();
  return row;
}

nn::MlpArch arch_for_scenario(const ContinualScenario& scenario, const RunConfig& config) {
  scenario.validate();
  return nn::arch_for(scenario.batches.front(), config.hidden);
}

// One replay epoch over `batch`, pairing each half-minibatch of the batch
// with a half-minibatch cycled from the memory.
void replay_epoch(nn::MlpParams& params, nn::AdamState& state, const nn::TrainConfig& cfg, const Dataset& batch,
                  const memory::RehearsalMemory& mem, std::span<const double> mem_weights, double mem_mean_weight,
                  Rng& rng, std::vector<std::size_t>& mem_order, std::size_t& mem_cursor) {
  const std::size_t half = std::max<std::size_t>(1, static_cast<std::size_t>(cfg.batch_size) / 2);
  const std::vector<std::size_t> order = rng.permutation(batch.size());
  const Eigen::Index f = batch.num_features();
  FeatureMatrix x;
  std::vector<int> y;
  std::vector<double> w;
  for (std::size_t start = 0; start < order.size(); start += half) {
    const std::size_t nb = std::min(half, order.size() - start);
    const std::size_t nm = half;
    x.resize(static_cast<Eigen::Index>(nb + nm), f);
    y.resize(nb + nm);
    w.resize(nb + nm);
    for (std::size_t j = 0; j < nb; ++j) {
      const std::size_t r = order[start + j];
      x.row(static_cast<Eigen::Index>(j)) = batch.features.row(static_cast<Eigen::Index>(r));
      y[j] = batch.labels[r];
      w[j] = 1.0;
    }
    for (std::size_t j = 0; j < nm; ++j) {
      if (mem_cursor == mem_order.size()) {
        mem_order = rng.permutation(mem.size());
        mem_cursor = 0;
      }
      const std::size_t r = mem_order[mem_cursor++];
      x.row(static_cast<Eigen::Index>(nb + j)) = mem.examples.features.row(static_cast<Eigen::Index>(r));
      y[nb + j] = mem.examples.labels[r];
      w[nb + j] = mem_weights[r];
    }
    const double normalizer = static_cast<double>(nb) + static_cast<double>(nm) * mem_mean_weight;
    nn::LossAndGrad lg = nn::loss_and_grad(params, x, y, w, normalizer);
    nn::adam_step(params, lg.grads, state, cfg);
  }
}

}  // namespace

RunResult run_gdumb(const ContinualScenario& scenario, Method method, std::size_t memory_size, const RunConfig& config,
                    std::uint64_t seed, const RunObserver* observer) {
  RunResult result;
  const auto start = Clock::now();
  const nn::MlpArch arch = arch_for_scenario(scenario, config);
  check_feasible(method, memory_size, config, arch);
  const RunSeeds seeds = RunSeeds::derive(seed);
  MemoryCurator curator(method, memory_size, config, arch, seeds);
  // Local matching starts from an initialisation draw.
  nn::MlpParams latest = embed::params_for_draw(arch, embedding_for(method, config, seeds), 0);

  for (std::size_t t = 0; t < scenario.num_tasks(); ++t) {
    try {
      curator.update(scenario.batches[t], t, latest, observer);
      const auto& mem = curator.memory();
      nn::MlpParams params = nn::init_sample(arch, seeds.model(t));
      if (observer && observer->on_task_start) observer->on_task_start(t, params);
      nn::TrainConfig cfg = config.train;
      cfg.seed = seeds.train(t);
      params = nn::train(std::move(params), mem.examples, mem.weights, cfg);
      if (observer && observer->on_task_end) observer->on_task_end(t, params);
      const double acc = nn::evaluate(params, scenario.test);
      result.rows.push_back(make_row(scenario, Paradigm::kGdumb, method, memory_size, seed, t, acc, start, config));
      latest = std::move(params);
    } catch (const std::exception& e) {
      result.complete = false;
      result.error = "task " + std::to_string(t) + ": " + e.what();
      break;
    }
  }
  return result;
}

RunResult run_replay(const ContinualScenario& scenario, Method method, std::size_t memory_size, const RunConfig& config,
                     std::uint64_t seed, const RunObserver* observer) {
  RunResult result;
  const auto start = Clock::now();
  const nn::MlpArch arch = arch_for_scenario(scenario, config);
  check_feasible(method, memory_size, config, arch);
  const RunSeeds seeds = RunSeeds::derive(seed);
  MemoryCurator curator(method, memory_size, config, arch, seeds);

  nn::MlpParams params = nn::init_sample(arch, seeds.model(0));
  nn::AdamState state = nn::AdamState::zeros_like(params);
  nn::TrainConfig cfg = config.train;
  cfg.epochs = config.replay_epochs_per_task > 0
                   ? config.replay_epochs_per_task
                   : std::max(1, config.train.epochs / static_cast<int>(scenario.num_tasks()));

  for (std::size_t t = 0; t < scenario.num_tasks(); ++t) {
    try {
      const Dataset& batch = scenario.batches[t];
      const auto& mem = curator.memory();
      if (observer && observer->on_task_start) observer->on_task_start(t, params);
      cfg.seed = seeds.train(t);
      if (mem.size() == 0) {
        const std::vector<double> ones(batch.size(), 1.0);
        params = nn::train(std::move(params), batch, ones, cfg, &state);
      } else {
        // Memory weights rescaled to sum to the number of items it stands for.
        const double total = std::accumulate(mem.weights.begin(), mem.weights.end(), 0.0);
        if (!(total > 0.0)) throw std::invalid_argument("memory weights must have a positive sum");
        std::vector<double> scaled(mem.weights);
        for (double& w : scaled) w *= static_cast<double>(mem.seen) / total;
        const double mean_weight = static_cast<double>(mem.seen) / static_cast<double>(mem.size());
        Rng rng(cfg.seed);
        std::vector<std::size_t> mem_order;
        std::size_t cursor = 0;
        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
          replay_epoch(params, state, cfg, batch, mem, scaled, mean_weight, rng, mem_order, cursor);
        }
      }
      if (observer && observer->on_task_end) observer->on_task_end(t, params);
      curator.update(batch, t, params, observer);
      const double acc = nn::evaluate(params, scenario.test);
      result.rows.push_back(make_row(scenario, Paradigm::kReplay, method, memory_size, seed, t, acc, start, config));
    } catch (const std::exception& e) {
      result.complete = false;
      result.error = "task " + std::to_string(t) + ": " + e.what();
      break;
    }
  }
  return result;
}

RunResult run(Paradigm paradigm, const ContinualScenario& scenario, Method method, std::size_t memory_size,
              const RunConfig& config, std::uint64_t seed, const RunObserver* observer) {
  return paradigm == Paradigm::kGdumb ? run_gdumb(scenario, method, memory_size, config, seed, observer)
                                      : run_replay(scenario, method, memory_size, config, seed, observer);
}

std::vector<AggregateRow> aggregate(const std::vector<ResultRow>& rows) {
  std::map<std::string, std::size_t> last_task;
  for (const auto& r : rows) {
    auto& v = last_task[r.scenario];
    v = std::max(v, r.task_index);
  }
  std::vector<AggregateRow> out;
  std::vector<std::vector<double>> samples;
  std::map<std::tuple<std::string, int, int, std::size_t>, std::size_t> slot;
  for (const auto& r : rows) {
    if (r.task_index != last_task[r.scenario]) continue;
    const auto key = std::make_tuple(r.scenario, static_cast<int>(r.paradigm), static_cast<int>(r.method), r.memory_size);
    auto it = slot.find(key);
    if (it == slot.end()) {
      it = slot.emplace(key, out.size()).first;
      out.push_back(AggregateRow{r.scenario, r.paradigm, r.method, r.memory_size, 0.0, 0.0, 0});
      samples.emplace_back();
    }
    samples[it->second].push_back(r.test_accuracy);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& s = samples[i];
    const double mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
    double sq = 0.0;
    for (double v : s) sq += (v - mean) * (v - mean);
    out[i].mean_final_acc = mean;
    out[i].std_final_acc = std::sqrt(sq / static_cast<double>(s.size()));
    out[i].num_seeds = s.size();
  }
  return out;
}

SweepResult sweep(const SweepGrid& grid) {
  if (grid.scenario == nullptr) throw std::invalid_argument("sweep needs a scenario");
  if (grid.paradigms.empty() || grid.methods.empty() || grid.memory_sizes.empty() || grid.seeds.empty()) {
    throw std::invalid_argument("sweep grid is empty");
  }
  struct Cell {
    Paradigm paradigm;
    Method method;
    std::size_t memory_size;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (Paradigm p : grid.paradigms) {
    for (Method m : grid.methods) {
      for (std::size_t n : grid.memory_sizes) {
        for (std::uint64_t s : grid.seeds) cells.push_back({p, m, n, s});
      }
    }
  }

  std::vector<RunResult> results(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const Cell& c = cells[i];
      try {
        results[i] = run(c.paradigm, *grid.scenario, c.method, c.memory_size, grid.config, c.seed);
      } catch (const std::exception& e) {
        results[i].complete = false;
        results[i].error = e.what();
      }
    }
  };
  const std::size_t jobs = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(1, grid.jobs)), 1, cells.size());
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  SweepResult out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    out.rows.insert(out.rows.end(), results[i].rows.begin(), results[i].rows.end());
    if (!results[i].complete) {
      const Cell& c = cells[i];
      out.failures.push_back({c.paradigm, c.method, c.memory_size, c.seed, results[i].error});
    }
  }
  out.aggregate = aggregate(out.rows);
  return out;
}

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  return cells;
}

void expect_header(std::istream& in, const std::string& header, const std::filesystem::path& path) {
  std::string line;
  if (!std::getline(in, line) || line != header) throw std::runtime_error(path.string() + ": unexpected header");
}

}  // namespace

constexpr const char* kRawHeader = "scenario,paradigm,method,memory_size,seed,task_index,test_accuracy,wall_time_s";
constexpr const char* kAggregateHeader =
    "scenario,paradigm,method,memory_size,mean_final_acc,std_final_acc,num_seeds";

void write_raw_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kRawHeader << '\n';
  char wall[32];
  for (const auto& r : rows) {
    std::snprintf(wall, sizeof wall, "%.6f", r.wall_time_s);
    out << r.scenario << ',' << to_string(r.paradigm) << ',' << to_string(r.method) << ',' << r.memory_size << ','
        << r.seed << ',' << r.task_index << ',' << fmt_double(r.test_accuracy) << ',' << wall << '\n';
  }
}

std::vector<ResultRow> read_raw_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  expect_header(in, kRawHeader, path);
  std::vector<ResultRow> rows;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto c = split(line);
    if (c.size() != 8) throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected 8 fields");
    try {
      ResultRow r{c[0], parse_paradigm(c[1]), parse_method(c[2]), std::stoull(c[3]), std::stoull(c[4]),
                  std::stoull(c[5]), std::stod(c[6]), std::stod(c[7])};
      if (!(r.test_accuracy >= 0.0 && r.test_accuracy <= 1.0)) throw std::invalid_argument("accuracy out of range");
      rows.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

void write_aggregate_csv(const std::vector<AggregateRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kAggregateHeader << '\n';
  for (const auto& r : rows) {
    out << r.scenario << ',' << to_string(r.paradigm) << ',' << to_string(r.method) << ',' << r.memory_size << ','
        << fmt_double(r.mean_final_acc) << ',' << fmt_double(r.std_final_acc) << ',' << r.num_seeds << '\n';
  }
}

std::vector<AggregateRow> read_aggregate_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  expect_header(in, kAggregateHeader, path);
  std::vector<AggregateRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split(line);
    if (c.size() != 7) throw std::runtime_error(path.string() + ": expected 7 fields");
    rows.push_back(AggregateRow{c[0], parse_paradigm(c[1]), parse_method(c[2]), std::stoull(c[3]), std::stod(c[4]),
                                std::stod(c[5]), std::stoull(c[6])});
  }
  return rows;
}

}  // namespace gmc::harness
