// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "muse/error.hpp"
#include "muse/ops.hpp"
#include "muse/reproduce.hpp"
#include "muse/trainer.hpp"

namespace fs = std::filesystem;

namespace muse {
namespace {

// Small enough that a full train/eval cycle takes well under a second.
Config tiny_config() {
  Config c;
  c.frames = 2;
  c.grid = 6;
  c.channels = 4;
  c.scales = "1,3,6";
  c.layers = 2;
  c.d_state = 4;
  c.conv_kernel = 3;
  c.patterns = 4;
  c.train_pairs = 16;
  c.test_pairs = 8;
  c.batch_size = 4;
  c.steps = 6;
  c.patch_size = 2;
  return c;
}

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("muse_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// ---- config ----

TEST(Config, TextRoundTrip) {
  Config c = tiny_config();
  c.block = BlockKind::MambaOut;
  c.pooling = PoolingStrategy::MeanScale1;
  c.learning_rate = 0.1234567890123;
  EXPECT_EQ(Config::parse(c.to_text()), c);
}

TEST(Config, ParseCommentsAndOverrides) {
  const Config c = Config::parse("# desk run\nlayers = 8\n\nvariant=v1  # inline\n");
  EXPECT_EQ(c.layers, 8u);
  EXPECT_EQ(c.variant, ScanVariant::V1);
  EXPECT_EQ(c.channels, Config{}.channels);
}

TEST(Config, InvalidValuesAreConfigErrors) {
  EXPECT_THROW(Config::parse("no_such_key = 1"), ConfigError);
  EXPECT_THROW(Config::parse("layers = -1"), ConfigError);
  EXPECT_THROW(Config::parse("learning_rate = fast"), ConfigError);
  Config c;
  c.block = BlockKind::Attention;
  c.variant = ScanVariant::V2;
  EXPECT_THROW(c.validate(), ConfigError);
  Config k = tiny_config();
  k.patch_size = 7;
  EXPECT_THROW(gen_data(k), ConfigError);
}

// ---- dataset ----

TEST(Dataset, SameSeedIsBitIdentical) {
  const SyntheticPairSet a = gen_data(tiny_config());
  const SyntheticPairSet b = gen_data(tiny_config());
  ASSERT_EQ(a.size(), 24u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.videos[i], b.videos[i]);
  EXPECT_EQ(a.texts, b.texts);
  EXPECT_EQ(a.pattern_of, b.pattern_of);
  Config other = tiny_config();
  other.seed = 1;
  EXPECT_NE(gen_data(other).videos[0], a.videos[0]);
}

TEST(Dataset, SplitAndTextsAreWellFormed) {
  const SyntheticPairSet d = gen_data(tiny_config());
  EXPECT_EQ(d.train.size(), 16u);
  EXPECT_EQ(d.test.size(), 8u);
  for (std::size_t i = 0; i < d.size(); ++i) {
    double n = 0.0;
    for (std::size_t c = 0; c < 4; ++c) n += d.texts.at({i, c}) * d.texts.at({i, c});
    EXPECT_NEAR(n, 1.0, 1e-12);
    EXPECT_LT(d.pattern_of[i], 4u);
  }
}

TEST(Dataset, GlobalMeansAreEqualizedAcrossPatterns) {
  Config c = tiny_config();
  c.grid = 14;
  c.scales = "1,3,7,14";
  c.patch_size = 3;
  const SyntheticPairSet d = gen_data(c);
  std::map<std::size_t, std::pair<double, std::size_t>> per_pattern;
  for (std::size_t i = 0; i < d.size(); ++i) {
    double s = 0.0;
    for (double v : d.videos[i].data()) s += v;
    auto& [sum, n] = per_pattern[d.pattern_of[i]];
    sum += s / static_cast<double>(d.videos[i].numel());
    ++n;
  }
  double lo = 1e9, hi = -1e9;
  for (const auto& [p, acc] : per_pattern) {
    const double mean = acc.first / static_cast<double>(acc.second);
    lo = std::min(lo, mean);
    hi = std::max(hi, mean);
  }
  EXPECT_LT(hi - lo, 1e-2);
}

TEST(Dataset, MeanPoolProbeIsNearChance) {
  // Nearest-centroid probe on per-channel means of every frame, fit on
  // train and scored on test.
  Config c = tiny_config();
  c.grid = 14;
  c.scales = "1,3,7,14";
  c.patch_size = 3;
  c.channels = 8;
  c.patterns = 8;
  c.train_pairs = 256;
  c.test_pairs = 200;
  const SyntheticPairSet d = gen_data(c);
  const std::size_t C = c.channels, T = c.frames, cells = c.grid * c.grid;
  auto features = [&](std::size_t i) {
    std::vector<double> f(T * C, 0.0);
    const Tensor& v = d.videos[i];
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t p = 0; p < cells; ++p) {
        for (std::size_t ch = 0; ch < C; ++ch) f[t * C + ch] += v[(t * cells + p) * C + ch] / cells;
      }
    }
    return f;
  };
  std::vector<std::vector<double>> centroid(c.patterns, std::vector<double>(T * C, 0.0));
  std::vector<double> count(c.patterns, 0.0);
  for (std::size_t i : d.train) {
    const auto f = features(i);
    for (std::size_t k = 0; k < f.size(); ++k) centroid[d.pattern_of[i]][k] += f[k];
    count[d.pattern_of[i]] += 1.0;
  }
  for (std::size_t m = 0; m < c.patterns; ++m) {
    for (double& v : centroid[m]) v /= std::max(count[m], 1.0);
  }
  std::size_t correct = 0;
  for (std::size_t i : d.test) {
    const auto f = features(i);
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t m = 0; m < c.patterns; ++m) {
      double dist = 0.0;
      for (std::size_t k = 0; k < f.size(); ++k) dist += (f[k] - centroid[m][k]) * (f[k] - centroid[m][k]);
      if (dist < best_d) best_d = dist, best = m;
    }
    correct += best == d.pattern_of[i];
  }
  const double accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(d.test.size());
  EXPECT_LE(accuracy, 100.0 / static_cast<double>(c.patterns) + 10.0);
}

TEST(Dataset, SaveLoadRoundTrip) {
  const fs::path dir = temp_dir("dataset");
  const SyntheticPairSet d = gen_data(tiny_config());
  save_dataset(dir, d);
  const SyntheticPairSet back = load_dataset(dir);
  ASSERT_EQ(back.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(back.videos[i], d.videos[i]);
  EXPECT_EQ(back.texts, d.texts);
  EXPECT_EQ(back.train, d.train);
  EXPECT_EQ(back.test, d.test);
  fs::remove_all(dir);
}

// ---- training ----

TEST(Train, FirstLossIsNearLogBatch) {
  // Default grid, width and pattern count; one frame and one layer keep it quick.
  Config c;
  c.frames = 1;
  c.layers = 1;
  c.train_pairs = 32;
  c.test_pairs = 8;
  const SyntheticPairSet d = gen_data(c);
  const MuseModel model = MuseModel::create(c);
  const auto batches = make_batches(c, d);
  EXPECT_NEAR(batch_loss(model, d, batches.front()), std::log(8.0), 0.05);
  const TrainResult r = train(tiny_config(), gen_data(tiny_config()));
  EXPECT_EQ(r.loss_curve.size(), tiny_config().steps);
}

TEST(Train, ZeroLearningRateLeavesParametersUntouched) {
  Config c = tiny_config();
  c.learning_rate = 0.0;
  const TrainResult r = train(c, gen_data(c));
  const MuseModel fresh = MuseModel::create(c);
  for (ParamId id = 0; id < fresh.store.size(); ++id) EXPECT_EQ(r.model.store.value(id), fresh.store.value(id));
}

TEST(Train, TrainingMovesTheGates) {
  const Config c = tiny_config();
  const TrainResult r = train(c, gen_data(c));
  const MuseModel fresh = MuseModel::create(c);
  EXPECT_NE(r.model.store.value(r.model.learner.layers[0].gate_w), fresh.store.value(fresh.learner.layers[0].gate_w));
}

TEST(Train, SameSeedIsBitIdentical) {
  const Config c = tiny_config();
  const SyntheticPairSet d = gen_data(c);
  const TrainResult a = train(c, d);
  const TrainResult b = train(c, d);
  EXPECT_EQ(a.loss_curve, b.loss_curve);
  EXPECT_EQ(evaluate(a.model, d).to_json(), evaluate(b.model, d).to_json());
}

TEST(Train, BatchesCoverTheTrainSplit) {
  const Config c = tiny_config();
  const SyntheticPairSet d = gen_data(c);
  const auto batches = make_batches(c, d);
  EXPECT_EQ(batches.size(), c.steps);
  for (const auto& b : batches) {
    EXPECT_EQ(b.size(), c.batch_size);
    for (std::size_t i : b) EXPECT_NE(std::find(d.train.begin(), d.train.end(), i), d.train.end());
  }
}

// ---- evaluation ----

TEST(Eval, UntrainedStackEqualsZeroLayers) {
  Config c = tiny_config();
  const SyntheticPairSet d = gen_data(c);
  const RetrievalReport four = evaluate(MuseModel::create(c), d);
  c.layers = 0;
  const RetrievalReport none = evaluate(MuseModel::create(c), d);
  EXPECT_EQ(four.to_json(), none.to_json());
}

TEST(Eval, IdenticalEmbeddingTablesRetrievePerfectly) {
  Rng rng(3);
  Graph g;
  const Tensor e = ops::l2_normalize_rows(g.constant(rng.normal_tensor({100, 16}))).value();
  const RetrievalReport r = make_report(SimilarityMatrix::paired(similarity(e, e)));
  EXPECT_EQ(r.recall_at.at(1), 100.0);
}

TEST(Eval, CheckpointRoundTripAndMismatch) {
  const fs::path dir = temp_dir("ckpt");
  const Config c = tiny_config();
  const SyntheticPairSet d = gen_data(c);
  const TrainResult r = train(c, d);
  r.model.save(dir / "checkpoint.bin");
  const MuseModel back = MuseModel::load(dir / "checkpoint.bin", c);
  EXPECT_EQ(evaluate(back, d).to_json(), evaluate(r.model, d).to_json());

  Config wider = c;
  wider.channels = 8;
  EXPECT_THROW(MuseModel::load(dir / "checkpoint.bin", wider), ConfigError);
  Config other_block = c;
  other_block.block = BlockKind::MambaOut;
  EXPECT_THROW(MuseModel::load(dir / "checkpoint.bin", other_block), ConfigError);
  fs::remove_all(dir);
}

// ---- reproduce ----

std::vector<std::string> labels(const std::string& axis) {
  std::vector<std::string> out;
  for (const auto& s : ablation_grid(axis, Config{})) out.push_back(s.label);
  return out;
}

TEST(Reproduce, GridsMatchTheAblationTables) {
  EXPECT_EQ(labels("scales"), (std::vector<std::string>{"{1}", "{1,3}", "{1,3,7}", "{1,3,7,14}", "{1,3,7,14,28}"}));
  EXPECT_EQ(labels("scan"), (std::vector<std::string>{"none", "v1", "v2"}));
  EXPECT_EQ(labels("layers"), (std::vector<std::string>{"0", "2", "4", "8", "16"}));
  EXPECT_EQ(labels("block"), (std::vector<std::string>{"mamba", "mambaout", "attention"}));
  EXPECT_EQ(labels("aggregation"), (std::vector<std::string>{"scale", "frame", "spatial"}));
  EXPECT_EQ(labels("residual").size(), 2u);
  EXPECT_THROW(ablation_grid("dropout", Config{}), ConfigError);
  for (const std::string& axis : ablation_axes()) {
    for (const auto& s : ablation_grid(axis, Config{})) EXPECT_NO_THROW(s.config.validate()) << axis << " " << s.label;
  }
}

TEST(Reproduce, RunsAndWritesCsv) {
  Config c = tiny_config();
  c.steps = 2;
  const auto rows = run_ablation("residual", c, {0, 1});
  ASSERT_EQ(rows.size(), 4u);
  std::ostringstream out;
  write_ablation_csv(out, rows);
  const std::string csv = out.str();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "axis,setting,seed,r1,r5,r10,mdr,mnr,first_loss,final_loss,seconds");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

// ---- command line ----

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MUSE_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string tiny_overrides() {
  std::string s;
  const Config c = tiny_config();
  std::istringstream text(c.to_text());
  std::string line;
  while (std::getline(text, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    s += " --set " + line.substr(0, eq) + "=" + line.substr(eq + 3);
  }
  return s;
}

TEST(Cli, EndToEndAndExitCodes) {
  const fs::path dir = temp_dir("cli");
  const std::string base = tiny_overrides();
  ASSERT_EQ(run_cli("gen-data --out " + (dir / "data").string() + base), 0);
  ASSERT_EQ(run_cli("train --quiet --data " + (dir / "data").string() + " --out " + (dir / "run").string() + base), 0);
  EXPECT_TRUE(fs::exists(dir / "run" / "checkpoint.bin"));
  ASSERT_EQ(run_cli("eval --data " + (dir / "data").string() + " --checkpoint " + (dir / "run" / "checkpoint.bin").string() +
                    " --out " + (dir / "eval").string() + base),
            0);
  std::ifstream report(dir / "eval" / "report.json");
  const nlohmann::json j = nlohmann::json::parse(report);
  for (const char* key : {"r1", "r5", "r10", "mdr", "mnr", "ranks"}) EXPECT_TRUE(j.contains(key)) << key;

  // Contract errors exit nonzero.
  EXPECT_EQ(run_cli("train --set no_such_key=1 --out " + dir.string()), 2);
  EXPECT_EQ(run_cli("eval --data " + (dir / "data").string() + " --checkpoint " +
                    (dir / "run" / "checkpoint.bin").string() + " --out " + dir.string() + base + " --set channels=8"),
            2);
  EXPECT_EQ(run_cli("reproduce nonsense --out " + dir.string()), 2);
  EXPECT_NE(run_cli("train --config /no/such/file"), 0);
  EXPECT_NE(run_cli(""), 0);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace muse
