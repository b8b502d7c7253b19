#include "gmc/cli.hpp"

#include "gmc/errors.hpp"
#include "gmc/harness.hpp"
#include "gmc/memory.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace gmc::cli {

namespace {

std::string real_text(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd out;
  if (xs.empty()) return out;
  for (double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - out.mean) * (x - out.mean);
  out.std = std::sqrt(ss / static_cast<double>(xs.size()));
  return out;
}

}  // namespace

int cmd_select(const SelectOptions& o, std::ostream& err) {
  Dataset data;
  harness::RunConfig config;
  harness::Method method = harness::Method::kGmc;
  try {
    if (o.n < 1) throw ConfigError("--n must be >= 1");
    if (o.embedding == "last_layer") {
      method = harness::Method::kGmcLastLayer;
    } else if (o.embedding != "random_projection") {
      throw ConfigError("unknown embedding '" + o.embedding + "'");
    }
    if (o.omp_score == "absolute") {
      config.omp.score = ScoreRule::kAbsolute;
    } else if (o.omp_score != "signed") {
      throw ConfigError("unknown omp score '" + o.omp_score + "'");
    }
    config.hidden = o.hidden;
    config.embedding.proj_dim = o.proj_dim;
    config.embedding.draws = o.draws;
    config.embedding.validate();
  } catch (const std::exception& e) {
    err << "gmc select: " << e.what() << '\n';
    return kUsageError;
  }

  try {
    CsvOptions csv;
    csv.label_column = o.label_column;
    csv.has_header = o.has_header;
    data = load_csv(o.data, csv);
  } catch (const std::exception& e) {
    err << "gmc select: " << e.what() << '\n';
    return kRuntimeError;
  }

  const nn::MlpArch arch = nn::arch_for(data, config.hidden);
  try {
    harness::check_feasible(method, o.n, config, arch);
    if (o.n > data.size()) {
      throw ConfigError("--n " + std::to_string(o.n) + " exceeds the " + std::to_string(data.size()) +
                        " rows of the dataset");
    }
  } catch (const std::exception& e) {
    err << "gmc select: " << e.what() << '\n';
    return kUsageError;
  }

  try {
    const harness::RunSeeds seeds = harness::RunSeeds::derive(o.seed);
    embed::Embedder embedder(arch, harness::embedding_for(method, config, seeds));
    const memory::RehearsalMemory mem =
        memory::gmc_update(memory::make_memory(o.n), data, embedder.embed(data), o.n, config.omp);
    std::ofstream out(o.output);
    if (!out) throw std::runtime_error("cannot write " + o.output.string());
    out << "row_index,weight\n";
    for (std::size_t i = 0; i < mem.size(); ++i) out << mem.examples.ids[i] << ',' << real_text(mem.weights[i]) << '\n';
    if (!out) throw std::runtime_error("failed writing " + o.output.string());
    if (mem.last_selection && mem.last_selection->truncated) {
      err << "gmc select: selection stopped early at " << mem.size() << " rows (singular system)\n";
    }
  } catch (const std::exception& e) {
    err << "gmc select: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}

int cmd_run(const std::filesystem::path& config_path, const config::KeyValues& overrides, std::ostream& err) {
  config::RunManifest manifest;
  harness::RunConfig run_config;
  std::vector<harness::Method> methods;
  std::vector<harness::Paradigm> paradigms;
  try {
    manifest = config::load_manifest(config_path, overrides);
    run_config = config::run_config(manifest);
    run_config.train.validate();
    run_config.embedding.validate();
    methods = config::methods(manifest);
    paradigms = config::paradigms(manifest);
  } catch (const std::exception& e) {
    err << "gmc run: " << e.what() << '\n';
    return kUsageError;
  }

  ContinualScenario scenario;
  try {
    scenario = config::build_scenario(manifest);
  } catch (const ConfigError& e) {
    err << "gmc run: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "gmc run: " << e.what() << '\n';
    return kRuntimeError;
  }

  std::vector<std::size_t> sizes;
  try {
    sizes = config::resolve_memory_sizes(manifest, run_config, nn::arch_for(scenario.batches.front(), manifest.hidden));
  } catch (const std::exception& e) {
    err << "gmc run: " << e.what() << '\n';
    return kUsageError;
  }
  manifest.memory_sizes = sizes;

  try {
    const std::filesystem::path out = manifest.out;
    std::filesystem::create_directories(out);
    config::write_manifest(manifest, out / "manifest.txt");
    write_scenario_manifest(scenario, out / ("scenario_" + scenario.name + ".txt"));
    write_class_frequencies(class_frequencies(scenario), out / ("class_freq_" + scenario.name + ".csv"));

    harness::SweepGrid grid;
    grid.scenario = &scenario;
    grid.paradigms = paradigms;
    grid.methods = methods;
    grid.memory_sizes = sizes;
    grid.seeds = manifest.seeds;
    grid.config = run_config;
    grid.jobs = manifest.jobs;
    const harness::SweepResult result = harness::sweep(grid);
    harness::write_raw_csv(result.rows, out / "raw.csv");
    harness::write_aggregate_csv(result.aggregate, out / "aggregate.csv");

    const auto errors_path = out / "errors.txt";
    std::filesystem::remove(errors_path);
    if (!result.failures.empty()) {
      std::ofstream log(errors_path);
      for (const auto& f : result.failures) {
        std::ostringstream line;
        line << harness::to_string(f.paradigm) << ' ' << harness::to_string(f.method) << " memory_size=" << f.memory_size
             << " seed=" << f.seed << ": " << f.message;
        log << line.str() << '\n';
        err << "gmc run: cell failed: " << line.str() << '\n';
      }
      return kRuntimeError;
    }
  } catch (const std::exception& e) {
    err << "gmc run: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}

int cmd_report(const std::filesystem::path& dir, std::optional<std::size_t> memory_size, std::ostream& err) {
  try {
    const auto raw_path = dir / "raw.csv";
    if (!std::filesystem::exists(raw_path)) throw std::runtime_error("missing " + raw_path.string());
    const std::vector<harness::ResultRow> rows = harness::read_raw_csv(raw_path);
    if (rows.empty()) throw std::runtime_error(raw_path.string() + " has no result rows");

    harness::write_aggregate_csv(harness::aggregate(rows), dir / "report_final.csv");

    std::size_t chosen = 0;
    if (memory_size) {
      chosen = *memory_size;
    } else {
      for (const auto& r : rows) chosen = std::max(chosen, r.memory_size);
    }
    using Key = std::tuple<std::string, std::string, std::string, std::size_t>;
    std::vector<Key> order;
    std::map<Key, std::vector<double>> cells;
    for (const auto& r : rows) {
      if (r.memory_size != chosen) continue;
      Key k{r.scenario, harness::to_string(r.paradigm), harness::to_string(r.method), r.task_index};
      auto [it, inserted] = cells.try_emplace(k);
      if (inserted) order.push_back(k);
      it->second.push_back(r.test_accuracy);
    }
    if (order.empty()) throw std::runtime_error("no rows with memory_size " + std::to_string(chosen));
    {
      std::ofstream out(dir / "report_per_task.csv");
      if (!out) throw std::runtime_error("cannot write report_per_task.csv");
      out << "scenario,paradigm,method,memory_size,task_index,mean_acc,std_acc,num_seeds\n";
      for (const auto& k : order) {
        const auto& xs = cells[k];
        const MeanStd ms = mean_std(xs);
        out << std::get<0>(k) << ',' << std::get<1>(k) << ',' << std::get<2>(k) << ',' << chosen << ','
            << std::get<3>(k) << ',' << real_text(ms.mean) << ',' << real_text(ms.std) << ',' << xs.size() << '\n';
      }
    }

    std::vector<std::string> scenarios;
    for (const auto& r : rows) {
      if (std::find(scenarios.begin(), scenarios.end(), r.scenario) == scenarios.end()) scenarios.push_back(r.scenario);
    }
    std::ofstream freq(dir / "report_class_freq.csv");
    if (!freq) throw std::runtime_error("cannot write report_class_freq.csv");
    bool header_done = false;
    for (const auto& name : scenarios) {
      const auto path = dir / ("class_freq_" + name + ".csv");
      std::ifstream in(path);
      if (!in) throw std::runtime_error("missing " + path.string());
      std::string line;
      if (!std::getline(in, line)) throw std::runtime_error(path.string() + " is empty");
      if (!header_done) {
        freq << "scenario," << line << '\n';
        header_done = true;
      }
      while (std::getline(in, line)) {
        if (!line.empty()) freq << name << ',' << line << '\n';
      }
    }
  } catch (const std::exception& e) {
    err << "gmc report: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}

int main(int argc, char** argv) {
  CLI::App app{"Gradient-matching coresets for rehearsal-based continual learning"};
  app.require_subcommand(1);

  // Shared flags; only the ones given on the command line override the file.
  std::string config_path;
  std::string out_dir;
  std::string seed_list;
  int jobs = 0;
  std::string memory_sizes;
  std::string method;
  std::string paradigm;
  std::string embedding;
  Eigen::Index proj_dim = 0;
  int draws = 0;

  auto add_shared = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Config file of key = value lines");
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--seed", seed_list, "Seed or comma-separated seed list");
    sub->add_option("--jobs", jobs, "Maximum parallel sweep cells")->check(CLI::PositiveNumber);
    sub->add_option("--memory-sizes", memory_sizes, "Comma-separated memory sizes");
    sub->add_option("--method", method, "Method name or comma-separated list");
    sub->add_option("--paradigm", paradigm, "gdumb or replay, or a comma-separated list");
    sub->add_option("--embedding", embedding, "Gradient embedding")
        ->check(CLI::IsMember({"random_projection", "last_layer"}));
    sub->add_option("--proj-dim", proj_dim, "Projected dimension per draw")->check(CLI::PositiveNumber);
    sub->add_option("--draws", draws, "Parameter draws per embedding")->check(CLI::PositiveNumber);
  };

  SelectOptions select;
  std::string hidden_list;
  bool no_header = false;
  auto* sel = app.add_subcommand("select", "Select a weighted coreset from a CSV file");
  add_shared(sel);
  sel->add_option("--data", select.data, "Input CSV")->required();
  sel->add_option("--n", select.n, "Coreset size")->required();
  sel->add_option("--output", select.output, "Output CSV of row_index,weight")->required();
  sel->add_option("--label-column", select.label_column, "Label column name or index (default: last)");
  sel->add_flag("--no-header", no_header, "Input has no header row");
  sel->add_option("--hidden", hidden_list, "Hidden widths, comma-separated");
  sel->add_option("--omp-score", select.omp_score, "signed or absolute")->check(CLI::IsMember({"signed", "absolute"}));

  auto* run = app.add_subcommand("run", "Run an experiment sweep");
  add_shared(run);
  std::vector<std::string> sets;
  run->add_option("--set", sets, "Override any config key, as key=value");

  auto* report = app.add_subcommand("report", "Summarize a results directory");
  std::filesystem::path results_dir;
  std::optional<std::size_t> report_size;
  report->add_option("results_dir", results_dir, "Directory written by run")->required();
  report->add_option("--memory-size", report_size, "Memory size of the per-task table (default: largest)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsageError;
  }

  if (sel->parsed()) {
    select.has_header = !no_header;
    select.embedding = embedding.empty() ? select.embedding : embedding;
    if (proj_dim > 0) select.proj_dim = proj_dim;
    if (draws > 0) select.draws = draws;
    try {
      if (!hidden_list.empty() || sel->count("--hidden")) {
        config::RunManifest m;
        std::vector<std::string> errors;
        config::apply(m, {{"hidden", hidden_list}}, errors);
        if (!errors.empty()) throw ConfigError(errors.front());
        select.hidden = m.hidden;
      }
      if (!seed_list.empty()) {
        config::RunManifest m;
        std::vector<std::string> errors;
        config::apply(m, {{"seeds", seed_list}}, errors);
        if (!errors.empty()) throw ConfigError(errors.front());
        if (m.seeds.size() != 1) throw ConfigError("select takes a single --seed");
        select.seed = m.seeds.front();
      }
    } catch (const std::exception& e) {
      std::cerr << "gmc select: " << e.what() << '\n';
      return kUsageError;
    }
    return cmd_select(select, std::cerr);
  }

  if (run->parsed()) {
    config::KeyValues overrides;
    if (!out_dir.empty()) overrides.emplace_back("out", out_dir);
    if (!seed_list.empty()) overrides.emplace_back("seeds", seed_list);
    if (jobs > 0) overrides.emplace_back("jobs", std::to_string(jobs));
    if (!memory_sizes.empty()) overrides.emplace_back("memory_sizes", memory_sizes);
    if (!method.empty()) overrides.emplace_back("methods", method);
    if (!paradigm.empty()) overrides.emplace_back("paradigms", paradigm);
    if (!embedding.empty()) overrides.emplace_back("embedding", embedding);
    if (proj_dim > 0) overrides.emplace_back("proj_dim", std::to_string(proj_dim));
    if (draws > 0) overrides.emplace_back("draws", std::to_string(draws));
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) {
        std::cerr << "gmc run: --set expects key=value, got '" << s << "'\n";
        return kUsageError;
      }
      overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    return cmd_run(config_path, overrides, std::cerr);
  }

  return cmd_report(results_dir, report_size, std::cerr);
}

}  // namespace gmc::cli
