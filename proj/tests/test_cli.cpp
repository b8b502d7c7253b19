#include "gmc/cli.hpp"
#include "gmc/harness.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace gmc;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string err;
};

// Runs the real binary with stderr captured to a file.
Outcome run_cli(const std::string& args, const fs::path& dir) {
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = std::string(GMC_CLI_PATH) + " " + args + " 2> " + err.string() + " > /dev/null";
  const int status = std::system(cmd.c_str());
  Outcome o;
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(err);
  std::stringstream ss;
  ss << in.rdbuf();
  o.err = ss.str();
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::pair<std::size_t, double>> read_selection(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "row_index,weight");
  std::vector<std::pair<std::size_t, double>> out;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    out.emplace_back(std::stoull(line.substr(0, comma)), std::stod(line.substr(comma + 1)));
  }
  return out;
}

const char* kSmall =
    "synth_n_per_class = 30\nsynth_dims = 4\nnum_batches = 3\nmethods = gmc\nseeds = 0\nepochs = 3\n"
    "hidden = 8\nproj_dim = 32\ndraws = 2\nmemory_sizes = 10\n";

}  // namespace

TEST(Select, FullBudgetSelectsEveryRow) {
  const auto dir = gmc::test::scratch_dir("cli_select_all");
  Dataset d = synth_blobs(1, 5, 2, 3, 0.0);
  write_csv(d, dir / "d.csv");
  const auto o = run_cli("select --data " + (dir / "d.csv").string() + " --n 10 --hidden 4 --proj-dim 16 --draws 1 "
                         "--output " + (dir / "sel.csv").string(), dir);
  ASSERT_EQ(o.code, 0) << o.err;
  const auto sel = read_selection(dir / "sel.csv");
  ASSERT_EQ(sel.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(sel[i].first, i);
    EXPECT_NEAR(sel[i].second, 1.0, 1e-8);
  }
}

TEST(Select, BudgetAboveEmbeddingDimensionIsUsageError) {
  const auto dir = gmc::test::scratch_dir("cli_select_big");
  write_csv(synth_blobs(1, 20, 2, 3, 0.0), dir / "d.csv");
  const auto o = run_cli("select --data " + (dir / "d.csv").string() +
                             " --n 17 --proj-dim 16 --draws 1 --output " + (dir / "sel.csv").string(),
                         dir);
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("D >= n"), std::string::npos) << o.err;
}

TEST(Select, MissingArgumentsAndFiles) {
  const auto dir = gmc::test::scratch_dir("cli_select_bad");
  EXPECT_EQ(run_cli("select --n 3", dir).code, 2);
  EXPECT_EQ(run_cli("select --data " + (dir / "none.csv").string() + " --n 3 --output x.csv", dir).code, 1);
  EXPECT_EQ(run_cli("frobnicate", dir).code, 2);
}

TEST(Select, WeightsReproduceGdumbFirstTask) {
  const auto dir = gmc::test::scratch_dir("cli_select_gdumb");
  const Dataset all = synth_blobs(3, 60, 3, 4, 2.0);
  TrainTestSplit split = train_test_split(all, 0.25, 1);
  write_csv(split.train, dir / "train.csv");
  CsvOptions csv;
  const Dataset train = load_csv(dir / "train.csv", csv);
  LabelMap map{train.label_names};
  csv.labels = &map;
  write_csv(split.test, dir / "test.csv");
  Dataset test = load_csv(dir / "test.csv", csv);
  for (auto& id : test.ids) id += train.size();

  const auto o = run_cli("select --data " + (dir / "train.csv").string() +
                             " --n 12 --hidden 8 --proj-dim 32 --draws 2 --seed 7 --output " +
                             (dir / "sel.csv").string(),
                         dir);
  ASSERT_EQ(o.code, 0) << o.err;
  const auto sel = read_selection(dir / "sel.csv");
  ASSERT_EQ(sel.size(), 12u);

  harness::RunConfig config;
  config.hidden = {8};
  config.embedding.proj_dim = 32;
  config.embedding.draws = 2;
  config.train.epochs = 10;
  config.train.batch_size = 5;
  ContinualScenario sc;
  sc.batches = {train};
  sc.test = test;
  const auto run = harness::run_gdumb(sc, harness::Method::kGmc, 12, config, 7);
  ASSERT_TRUE(run.complete) << run.error;

  std::vector<std::size_t> rows;
  std::vector<double> weights;
  for (auto [r, w] : sel) {
    rows.push_back(r);
    weights.push_back(w);
  }
  const Dataset coreset = train.subset(rows);
  const harness::RunSeeds seeds = harness::RunSeeds::derive(7);
  nn::TrainConfig cfg = config.train;
  cfg.seed = seeds.train(0);
  const nn::MlpParams p =
      nn::train(nn::init_sample(nn::arch_for(train, config.hidden), seeds.model(0)), coreset, weights, cfg);
  EXPECT_EQ(nn::evaluate(p, test), run.rows[0].test_accuracy);
}

TEST(Run, MinimalConfigWritesOutputs) {
  const auto dir = gmc::test::scratch_dir("cli_run_min");
  std::ofstream(dir / "c.txt") << kSmall;
  const auto o = run_cli("run --config " + (dir / "c.txt").string() + " --out " + (dir / "out").string(), dir);
  ASSERT_EQ(o.code, 0) << o.err;
  for (const char* f : {"raw.csv", "aggregate.csv", "manifest.txt", "class_freq_synthetic_sorted.csv",
                        "scenario_synthetic_sorted.txt"}) {
    EXPECT_TRUE(fs::exists(dir / "out" / f)) << f;
  }
  EXPECT_EQ(harness::read_raw_csv(dir / "out" / "raw.csv").size(), 3u);
}

TEST(Run, UnknownKeyIsUsageErrorNamingKey) {
  const auto dir = gmc::test::scratch_dir("cli_run_unknown");
  std::ofstream(dir / "c.txt") << kSmall << "learning_rat = 0.1\n";
  const auto o = run_cli("run --config " + (dir / "c.txt").string() + " --out " + (dir / "out").string(), dir);
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("learning_rat"), std::string::npos) << o.err;
  EXPECT_FALSE(fs::exists(dir / "out" / "raw.csv"));
}

TEST(Run, CommandLineOverridesFileInManifest) {
  const auto dir = gmc::test::scratch_dir("cli_run_override");
  std::ofstream(dir / "c.txt") << kSmall;
  const auto o = run_cli("run --config " + (dir / "c.txt").string() + " --memory-sizes 6 --set epochs=2 --out " +
                             (dir / "out").string(),
                         dir);
  ASSERT_EQ(o.code, 0) << o.err;
  const std::string manifest = slurp(dir / "out" / "manifest.txt");
  EXPECT_NE(manifest.find("\nmemory_sizes = 6\n"), std::string::npos) << manifest;
  EXPECT_NE(manifest.find("\nepochs = 2\n"), std::string::npos);
  EXPECT_EQ(harness::read_raw_csv(dir / "out" / "raw.csv").front().memory_size, 6u);
}

TEST(Run, ManifestAloneReproducesRun) {
  const auto dir = gmc::test::scratch_dir("cli_run_manifest");
  std::ofstream(dir / "c.txt") << kSmall;
  ASSERT_EQ(run_cli("run --config " + (dir / "c.txt").string() + " --out " + (dir / "a").string(), dir).code, 0);
  ASSERT_EQ(run_cli("run --config " + (dir / "a" / "manifest.txt").string() + " --out " + (dir / "b").string(), dir)
                .code,
            0);
  EXPECT_EQ(slurp(dir / "a" / "raw.csv"), slurp(dir / "b" / "raw.csv"));
}

TEST(Run, InfeasibleSizeIsUsageError) {
  const auto dir = gmc::test::scratch_dir("cli_run_infeasible");
  std::ofstream(dir / "c.txt") << kSmall;
  const auto o = run_cli("run --config " + (dir / "c.txt").string() + " --memory-sizes 65 --out " +
                             (dir / "out").string(),
                         dir);
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("D >= n"), std::string::npos) << o.err;
}

TEST(Report, AggregatesFiveSeedsAndIdenticalStdIsZero) {
  const auto dir = gmc::test::scratch_dir("cli_report");
  std::ofstream raw(dir / "raw.csv");
  raw << "scenario,paradigm,method,memory_size,seed,task_index,test_accuracy,wall_time_s\n";
  for (int s = 0; s < 5; ++s) {
    raw << "x,gdumb,reservoir,10," << s << ",0,0.5,0\n";
    raw << "x,gdumb,reservoir,10," << s << ",1,0.75,0\n";
  }
  raw.close();
  std::ofstream(dir / "class_freq_x.csv") << "batch,class_0,class_1\n0,1,0\n1,0,1\n";
  ASSERT_EQ(cli::cmd_report(dir, std::nullopt, std::cerr), 0);
  const auto agg = harness::read_aggregate_csv(dir / "report_final.csv");
  ASSERT_EQ(agg.size(), 1u);
  EXPECT_EQ(agg[0].num_seeds, 5u);
  EXPECT_EQ(agg[0].mean_final_acc, 0.75);
  EXPECT_EQ(agg[0].std_final_acc, 0.0);
  const std::string per_task = slurp(dir / "report_per_task.csv");
  EXPECT_NE(per_task.find("x,gdumb,reservoir,10,0,0.5,0,5"), std::string::npos) << per_task;
  EXPECT_EQ(slurp(dir / "report_class_freq.csv"), "scenario,batch,class_0,class_1\nx,0,1,0\nx,1,0,1\n");
}

TEST(Report, MatchesRecomputationFromRawRun) {
  const auto dir = gmc::test::scratch_dir("cli_report_run");
  std::ofstream(dir / "c.txt") << kSmall << "seeds = 0,1,2\nmethods = gmc,reservoir\n";
  ASSERT_EQ(run_cli("run --config " + (dir / "c.txt").string() + " --out " + (dir / "out").string(), dir).code, 0);
  ASSERT_EQ(run_cli("report " + (dir / "out").string(), dir).code, 0);
  const auto rows = harness::read_raw_csv(dir / "out" / "raw.csv");
  const auto report = harness::read_aggregate_csv(dir / "out" / "report_final.csv");
  ASSERT_EQ(report.size(), 2u);
  for (const auto& a : report) {
    std::vector<double> xs;
    for (const auto& r : rows) {
      if (r.method == a.method && r.task_index == 2) xs.push_back(r.test_accuracy);
    }
    ASSERT_EQ(xs.size(), 3u);
    double mean = 0, ss = 0;
    for (double x : xs) mean += x / 3;
    for (double x : xs) ss += (x - mean) * (x - mean);
    EXPECT_NEAR(a.mean_final_acc, mean, 1e-12);
    EXPECT_NEAR(a.std_final_acc, std::sqrt(ss / 3), 1e-12);
  }
}

TEST(Report, MissingOrCorruptInputIsRuntimeError) {
  const auto dir = gmc::test::scratch_dir("cli_report_bad");
  EXPECT_EQ(run_cli("report " + dir.string(), dir).code, 1);
  std::ofstream(dir / "raw.csv") << "garbage\n";
  EXPECT_EQ(run_cli("report " + dir.string(), dir).code, 1);
}
