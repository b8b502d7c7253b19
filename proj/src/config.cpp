#include "gmc/config.hpp"

#include "gmc/errors.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <stdexcept>

namespace gmc::config {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

template <typename T>
T parse_integer(const std::string& text) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) throw std::invalid_argument("not an integer: '" + text + "'");
  return value;
}

double parse_real(const std::string& text) {
  std::size_t used = 0;
  const double v = std::stod(text, &used);
  if (used != text.size()) throw std::invalid_argument("not a number: '" + text + "'");
  return v;
}

bool parse_bool(const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw std::invalid_argument("not a boolean: '" + text + "'");
}

template <typename T>
std::vector<T> parse_int_list(const std::string& text) {
  std::vector<T> out;
  for (const auto& item : split_list(text)) out.push_back(parse_integer<T>(item));
  return out;
}

std::string real_text(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& items) {
  std::ostringstream out;
  for (std::size_t i = 0; i < items.size(); ++i) out << (i ? "," : "") << items[i];
  return out.str();
}

struct Key {
  const char* name;
  std::function<void(RunManifest&, const std::string&)> set;
  std::function<std::string(const RunManifest&)> get;
};

template <typename T>
Key positive(const char* name, T RunManifest::*field) {
  return {name,
          [=](RunManifest& m, const std::string& v) {
            const T x = parse_integer<T>(v);
            if (x < 1) throw std::invalid_argument("must be >= 1");
            m.*field = x;
          },
          [=](const RunManifest& m) { return std::to_string(m.*field); }};
}

template <typename T>
Key non_negative(const char* name, T RunManifest::*field) {
  return {name,
          [=](RunManifest& m, const std::string& v) {
            const T x = parse_integer<T>(v);
            if (x < 0) throw std::invalid_argument("must be >= 0");
            m.*field = x;
          },
          [=](const RunManifest& m) { return std::to_string(m.*field); }};
}

Key text(const char* name, std::string RunManifest::*field, std::set<std::string> allowed = {}) {
  return {name,
          [=](RunManifest& m, const std::string& v) {
            if (!allowed.empty() && !allowed.count(v)) throw std::invalid_argument("unsupported value '" + v + "'");
            m.*field = v;
          },
          [=](const RunManifest& m) { return m.*field; }};
}

Key boolean(const char* name, bool RunManifest::*field) {
  return {name, [=](RunManifest& m, const std::string& v) { m.*field = parse_bool(v); },
          [=](const RunManifest& m) { return std::string(m.*field ? "true" : "false"); }};
}

Key real(const char* name, double RunManifest::*field, double lo, bool lo_open) {
  return {name,
          [=](RunManifest& m, const std::string& v) {
            const double x = parse_real(v);
            if (lo_open ? !(x > lo) : !(x >= lo)) throw std::invalid_argument("out of range");
            m.*field = x;
          },
          [=](const RunManifest& m) { return real_text(m.*field); }};
}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = [] {
    std::vector<Key> k;
    k.push_back(text("scenario", &RunManifest::scenario, {"sorted", "class_incremental", "iid_incremental"}));
    k.push_back(text("data", &RunManifest::data));
    k.push_back(text("test_data", &RunManifest::test_data));
    k.push_back(text("label_column", &RunManifest::label_column));
    k.push_back(boolean("has_header", &RunManifest::has_header));
    k.push_back(positive("synth_n_per_class", &RunManifest::synth_n_per_class));
    k.push_back(positive("synth_classes", &RunManifest::synth_classes));
    k.push_back(positive("synth_dims", &RunManifest::synth_dims));
    k.push_back(real("synth_drift", &RunManifest::synth_drift, 0.0, false));
    k.push_back(real("synth_radius", &RunManifest::synth_radius, 0.0, true));
    k.push_back(positive("num_batches", &RunManifest::num_batches));
    k.push_back(positive("classes_per_task", &RunManifest::classes_per_task));
    k.push_back(non_negative("sort_feature", &RunManifest::sort_feature));
    k.push_back({"test_fraction",
                 [](RunManifest& m, const std::string& v) {
                   const double x = parse_real(v);
                   if (!(x > 0.0 && x < 1.0)) throw std::invalid_argument("must lie in (0, 1)");
                   m.test_fraction = x;
                 },
                 [](const RunManifest& m) { return real_text(m.test_fraction); }});
    k.push_back(boolean("standardize", &RunManifest::standardize));
    k.push_back({"scenario_seed", [](RunManifest& m, const std::string& v) { m.scenario_seed = parse_integer<std::uint64_t>(v); },
                 [](const RunManifest& m) { return std::to_string(m.scenario_seed); }});
    k.push_back({"methods",
                 [](RunManifest& m, const std::string& v) {
                   auto items = split_list(v);
                   if (items.empty()) throw std::invalid_argument("needs at least one method");
                   for (const auto& s : items) harness::parse_method(s);
                   m.methods = items;
                 },
                 [](const RunManifest& m) { return join(m.methods); }});
    k.push_back({"paradigms",
                 [](RunManifest& m, const std::string& v) {
                   auto items = split_list(v);
                   if (items.empty()) throw std::invalid_argument("needs at least one paradigm");
                   for (const auto& s : items) harness::parse_paradigm(s);
                   m.paradigms = items;
                 },
                 [](const RunManifest& m) { return join(m.paradigms); }});
    k.push_back({"memory_sizes",
                 [](RunManifest& m, const std::string& v) {
                   if (v == "auto") {
                     m.memory_sizes.clear();
                     return;
                   }
                   auto sizes = parse_int_list<std::size_t>(v);
                   if (sizes.empty()) throw std::invalid_argument("needs at least one size");
                   for (auto s : sizes) {
                     if (s < 1) throw std::invalid_argument("sizes must be >= 1");
                   }
                   m.memory_sizes = sizes;
                 },
                 [](const RunManifest& m) { return m.memory_sizes.empty() ? std::string("auto") : join(m.memory_sizes); }});
    k.push_back({"seeds",
                 [](RunManifest& m, const std::string& v) {
                   auto seeds = parse_int_list<std::uint64_t>(v);
                   if (seeds.empty()) throw std::invalid_argument("needs at least one seed");
                   if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
                     throw std::invalid_argument("seeds must be distinct");
                   }
                   m.seeds = seeds;
                 },
                 [](const RunManifest& m) { return join(m.seeds); }});
    k.push_back(non_negative("epochs", &RunManifest::epochs));
    k.push_back(positive("batch_size", &RunManifest::batch_size));
    k.push_back(real("learning_rate", &RunManifest::learning_rate, 0.0, true));
    k.push_back({"hidden",
                 [](RunManifest& m, const std::string& v) {
                   auto widths = parse_int_list<Eigen::Index>(v);
                   for (auto w : widths) {
                     if (w < 1) throw std::invalid_argument("widths must be >= 1");
                   }
                   m.hidden = widths;
                 },
                 [](const RunManifest& m) { return join(m.hidden); }});
    k.push_back(non_negative("replay_epochs_per_task", &RunManifest::replay_epochs_per_task));
    k.push_back(text("embedding", &RunManifest::embedding, {"random_projection", "last_layer"}));
    k.push_back(positive("proj_dim", &RunManifest::proj_dim));
    k.push_back(positive("draws", &RunManifest::draws));
    k.push_back(text("omp_score", &RunManifest::omp_score, {"signed", "absolute"}));
    k.push_back(positive("jobs", &RunManifest::jobs));
    k.push_back(boolean("record_wall_time", &RunManifest::record_wall_time));
    k.push_back(text("out", &RunManifest::out));
    return k;
  }();
  return table;
}

}  // namespace

std::vector<std::string> known_keys() {
  std::vector<std::string> names;
  for (const auto& k : keys()) names.emplace_back(k.name);
  return names;
}

KeyValues parse_key_values(std::istream& in, const std::string& source) {
  KeyValues out;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> errors;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || trim(line.substr(0, eq)).empty()) {
      errors.push_back(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
      continue;
    }
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  if (!errors.empty()) {
    std::string msg;
    for (const auto& e : errors) msg += (msg.empty() ? "" : "\n") + e;
    throw ConfigError(msg);
  }
  return out;
}

void apply(RunManifest& manifest, const KeyValues& entries, std::vector<std::string>& errors) {
  for (const auto& [key, value] : entries) {
    const Key* match = nullptr;
    for (const auto& k : keys()) {
      if (key == k.name) match = &k;
    }
    if (!match) {
      errors.push_back("unknown key '" + key + "'");
      continue;
    }
    try {
      match->set(manifest, value);
    } catch (const std::exception& e) {
      errors.push_back("bad value for key '" + key + "': " + e.what());
    }
  }
}

RunManifest load_manifest(const std::filesystem::path& config_path, const KeyValues& overrides) {
  RunManifest m;
  std::vector<std::string> errors;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open config file " + config_path.string());
    apply(m, parse_key_values(in, config_path.string()), errors);
    m.config_path = config_path.string();
  }
  apply(m, overrides, errors);
  if (!errors.empty()) {
    std::string msg = "configuration errors:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return m;
}

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# resolved run configuration\n";
  out << "# config_path: " << (manifest.config_path.empty() ? "(none)" : manifest.config_path) << '\n';
  for (const auto& k : keys()) out << k.name << " = " << k.get(manifest) << '\n';
}

harness::RunConfig run_config(const RunManifest& m) {
  harness::RunConfig c;
  c.train.epochs = m.epochs;
  c.train.batch_size = m.batch_size;
  c.train.learning_rate = m.learning_rate;
  c.hidden = m.hidden;
  c.embedding.draws = m.draws;
  c.embedding.proj_dim = m.proj_dim;
  c.embedding.mode = m.embedding == "last_layer" ? embed::Mode::kLastLayer : embed::Mode::kRandomProjection;
  c.omp.score = m.omp_score == "absolute" ? ScoreRule::kAbsolute : ScoreRule::kSigned;
  c.replay_epochs_per_task = m.replay_epochs_per_task;
  c.record_wall_time = m.record_wall_time;
  return c;
}

std::vector<harness::Method> methods(const RunManifest& m) {
  std::vector<harness::Method> out;
  for (const auto& s : m.methods) out.push_back(harness::parse_method(s));
  return out;
}

std::vector<harness::Paradigm> paradigms(const RunManifest& m) {
  std::vector<harness::Paradigm> out;
  for (const auto& s : m.paradigms) out.push_back(harness::parse_paradigm(s));
  return out;
}

ContinualScenario build_scenario(const RunManifest& m) {
  Dataset data;
  std::string source;
  if (m.data == "synthetic") {
    data = synth_blobs(derive_seed(m.scenario_seed, 11), m.synth_n_per_class, m.synth_classes, m.synth_dims,
                       m.synth_drift, m.synth_radius);
    source = "synthetic";
  } else {
    CsvOptions opts;
    opts.label_column = m.label_column;
    opts.has_header = m.has_header;
    data = load_csv(m.data, opts);
    source = std::filesystem::path(m.data).stem().string();
  }

  TrainTestSplit split;
  if (!m.test_data.empty()) {
    LabelMap labels{data.label_names};
    CsvOptions opts;
    opts.label_column = m.label_column;
    opts.has_header = m.has_header;
    opts.labels = &labels;
    split.train = std::move(data);
    split.test = load_csv(m.test_data, opts);
    split.test.num_classes = split.train.num_classes;
    // Test rows are a different source; keep their ids disjoint.
    for (auto& id : split.test.ids) id += split.train.size();
  } else {
    split = train_test_split(data, m.test_fraction, derive_seed(m.scenario_seed, 12));
  }
  if (m.standardize) {
    const Standardizer s = Standardizer::fit(split.train);
    s.apply(split.train);
    s.apply(split.test);
  }

  ContinualScenario scenario;
  const ScenarioKind kind = parse_scenario_kind(m.scenario);
  switch (kind) {
    case ScenarioKind::kSorted:
      scenario = make_sorted_scenario(split.train, split.test, m.sort_feature, m.num_batches);
      break;
    case ScenarioKind::kClassIncremental:
      scenario = make_class_incremental(split.train, split.test, m.classes_per_task);
      break;
    case ScenarioKind::kIidIncremental:
      scenario = make_iid_incremental(split.train, split.test, m.num_batches, derive_seed(m.scenario_seed, 13));
      break;
  }
  scenario.seed = m.scenario_seed;
  scenario.name = source + "_" + to_string(kind);
  scenario.validate();
  return scenario;
}

std::vector<std::size_t> resolve_memory_sizes(const RunManifest& m, const harness::RunConfig& config,
                                              const nn::MlpArch& arch) {
  const auto ms = methods(m);
  if (!m.memory_sizes.empty()) {
    std::vector<std::string> errors;
    for (std::size_t n : m.memory_sizes) {
      for (auto method : ms) {
        try {
          harness::check_feasible(method, n, config, arch);
        } catch (const ConfigError& e) {
          errors.push_back(std::string("bad value for key 'memory_sizes': ") + e.what());
        }
      }
    }
    if (!errors.empty()) {
      std::string msg = "configuration errors:";
      for (const auto& e : errors) msg += "\n  " + e;
      throw ConfigError(msg);
    }
    return m.memory_sizes;
  }
  std::vector<std::size_t> sizes;
  for (std::size_t n : kDefaultMemorySizes) {
    bool ok = true;
    for (auto method : ms) {
      const auto d = harness::embedding_dim(method, config, arch);
      if (harness::is_gradient_matching(method) && static_cast<Eigen::Index>(n) > d) ok = false;
    }
    if (ok) sizes.push_back(n);
  }
  if (sizes.empty()) throw ConfigError("no default memory size is feasible; set memory_sizes explicitly");
  return sizes;
}

}  // namespace gmc::config
