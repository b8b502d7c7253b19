#include "gmc/config.hpp"
#include "gmc/errors.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace gmc;
using namespace gmc::config;

TEST(KeyValues, ParsesCommentsAndWhitespace) {
  std::istringstream in("# header\n  seeds = 1, 2 ,3  # trailing\n\nmethods=gmc\n");
  const KeyValues kv = parse_key_values(in, "x");
  ASSERT_EQ(kv.size(), 2u);
  EXPECT_EQ(kv[0], (std::pair<std::string, std::string>{"seeds", "1, 2 ,3"}));
  EXPECT_EQ(kv[1].second, "gmc");
}

TEST(KeyValues, MalformedLineIsConfigError) {
  std::istringstream in("seeds 1\n");
  EXPECT_THROW(parse_key_values(in, "x"), ConfigError);
}

TEST(Manifest, DefaultsAreComplete) {
  const RunManifest m = load_manifest({}, {});
  EXPECT_EQ(m.seeds.size(), 5u);
  EXPECT_EQ(m.epochs, 200);
  EXPECT_EQ(m.hidden, (std::vector<Eigen::Index>{128, 128}));
  EXPECT_TRUE(m.memory_sizes.empty());
}

TEST(Manifest, PrecedenceOverridesBeatFileBeatDefaults) {
  const auto dir = gmc::test::scratch_dir("precedence");
  std::ofstream(dir / "c.txt") << "memory_sizes = 10\nepochs = 3\n";
  const RunManifest m = load_manifest(dir / "c.txt", {{"memory_sizes", "20,30"}});
  EXPECT_EQ(m.memory_sizes, (std::vector<std::size_t>{20, 30}));
  EXPECT_EQ(m.epochs, 3);
  EXPECT_EQ(m.batch_size, 100);
}

TEST(Manifest, EveryOffendingKeyNamed) {
  const auto dir = gmc::test::scratch_dir("bad_keys");
  std::ofstream(dir / "c.txt") << "colour = red\nepochs = -1\nmethods = gmc,magic\nseeds = 1,1\n";
  try {
    load_manifest(dir / "c.txt", {{"draws", "zero"}});
    FAIL() << "accepted a bad config";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    for (const char* key : {"colour", "epochs", "methods", "seeds", "draws"}) {
      EXPECT_NE(msg.find(key), std::string::npos) << key;
    }
  }
}

TEST(Manifest, WrittenManifestReloadsIdentically) {
  const auto dir = gmc::test::scratch_dir("manifest_round");
  RunManifest m = load_manifest({}, {{"synth_drift", "0.1"}, {"memory_sizes", "5,7"}, {"hidden", "3"}});
  write_manifest(m, dir / "m.txt");
  const RunManifest back = load_manifest(dir / "m.txt", {});
  write_manifest(back, dir / "m2.txt");
  std::ifstream a(dir / "m.txt"), b(dir / "m2.txt");
  std::string la, lb;
  // Skip the config_path comment, which legitimately differs.
  while (std::getline(a, la) && std::getline(b, lb)) {
    if (la.rfind("# config_path", 0) == 0) continue;
    EXPECT_EQ(la, lb);
  }
  EXPECT_EQ(back.synth_drift, 0.1);
  for (const auto& key : known_keys()) {
    std::ifstream in(dir / "m.txt");
    std::string text((std::istreambuf_iterator<char>(in)), {});
    EXPECT_NE(text.find("\n" + key + " = "), std::string::npos) << key;
  }
}

TEST(Scenario, SyntheticSortedHasTenBatchesAndStandardizedTrain) {
  const RunManifest m = load_manifest({}, {{"synth_n_per_class", "50"}});
  const ContinualScenario s = build_scenario(m);
  EXPECT_EQ(s.num_tasks(), 10u);
  EXPECT_EQ(s.train_size(), 160u);
  EXPECT_EQ(s.test.size(), 40u);
  EXPECT_EQ(s.name, "synthetic_sorted");
  Eigen::MatrixXd all(160, 8);
  Eigen::Index r = 0;
  for (const auto& b : s.batches) {
    all.middleRows(r, b.features.rows()) = b.features;
    r += b.features.rows();
  }
  EXPECT_LE(all.colwise().mean().cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Scenario, CsvWithSeparateTestFile) {
  const auto dir = gmc::test::scratch_dir("scenario_csv");
  std::ofstream(dir / "train.csv") << "a,b,y\n0,1,u\n1,0,v\n2,2,u\n3,1,v\n";
  std::ofstream(dir / "test.csv") << "a,b,y\n1,1,v\n";
  const RunManifest m = load_manifest({}, {{"data", (dir / "train.csv").string()},
                                           {"test_data", (dir / "test.csv").string()},
                                           {"scenario", "iid_incremental"},
                                           {"num_batches", "2"}});
  const ContinualScenario s = build_scenario(m);
  EXPECT_EQ(s.num_tasks(), 2u);
  EXPECT_EQ(s.test.size(), 1u);
  EXPECT_EQ(s.test.labels[0], 1);
  EXPECT_EQ(s.name, "train_iid_incremental");
}

TEST(MemorySizes, DefaultsFilteredByEmbeddingDimension) {
  RunManifest m = load_manifest({}, {{"proj_dim", "300"}, {"draws", "2"}});
  const nn::MlpArch arch{8, {128, 128}, 4};
  EXPECT_EQ(resolve_memory_sizes(m, run_config(m), arch), (std::vector<std::size_t>{100, 200, 500}));
  m.methods = {"reservoir"};
  EXPECT_EQ(resolve_memory_sizes(m, run_config(m), arch), kDefaultMemorySizes);
  m.methods = {"gmc"};
  m.memory_sizes = {601};
  EXPECT_THROW(resolve_memory_sizes(m, run_config(m), arch), ConfigError);
}

TEST(RunConfig, Translation) {
  const RunManifest m = load_manifest({}, {{"embedding", "last_layer"}, {"omp_score", "absolute"}, {"epochs", "7"}});
  const harness::RunConfig c = run_config(m);
  EXPECT_EQ(c.embedding.mode, embed::Mode::kLastLayer);
  EXPECT_EQ(c.omp.score, ScoreRule::kAbsolute);
  EXPECT_EQ(c.train.epochs, 7);
}
