/* Copyright (c) 2026 regpool Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "regpool/experiment.hpp"

namespace fs = std::filesystem;
using regpool::KeyValueConfig;
using regpool::PoolKind;
using regpool::RunConfig;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("regpool_exp_" + tag)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) lines.push_back(line);
  return lines;
}

// A config whose full run takes well under a second.
RunConfig tiny_run(const fs::path& out, const std::string& extra = "") {
  std::string text =
      "dataset.kind = synth\n"
      "dataset.synth_per_class = 6\n"
      "dataset.train_subset = 20\n"
      "dataset.test_subset = 10\n"
      "dataset.resize = 12\n"
      "dataset.seed = 3\n"
      "model.width = 0.02\n"
      "pool.kind = regularized\n"
      "pool.n = 2\n"
      "pool.w = 3\n"
      "pool.s = 2\n"
      "train.epochs = 2\n"
      "train.batch = 10\n"
      "seeds = 1,2\n";
  text += "out = " + out.string() + "\n";
  text += extra;
  return RunConfig::from_config(KeyValueConfig::parse_string(text, "tiny"));
}

}  // namespace

// ---------------------------------------------------------------------------
// config parsing
// ---------------------------------------------------------------------------

TEST_CASE("key=value parsing trims, skips comments, and tracks consumption") {
  KeyValueConfig cfg = KeyValueConfig::parse_string(
      "# leading comment\n"
      "  alpha = 1.5  \n"
      "\n"
      "name =  spaced value \n"
      "count = 42\n",
      "unit");
  REQUIRE(cfg.get_double("alpha", 0.0) == 1.5);
  REQUIRE(cfg.get_string("name", "") == "spaced value");
  REQUIRE(cfg.get_size("count", 0) == 42);
  REQUIRE(cfg.get_string("missing", "fallback") == "fallback");
  cfg.require_fully_consumed();  // every provided key was read
}

TEST_CASE("config errors name the offending line, key, or value") {
  REQUIRE_THROWS_WITH(KeyValueConfig::parse_string("just words\n", "bad.cfg"),
                      Catch::Matchers::ContainsSubstring("bad.cfg:1") &&
                          Catch::Matchers::ContainsSubstring("key = value"));
  REQUIRE_THROWS_WITH(KeyValueConfig::parse_string("a = 1\na = 2\n", "dup.cfg"),
                      Catch::Matchers::ContainsSubstring("duplicate"));
  REQUIRE_THROWS_WITH(KeyValueConfig::parse_string("= 1\n", "anon.cfg"),
                      Catch::Matchers::ContainsSubstring("empty key"));

  KeyValueConfig cfg = KeyValueConfig::parse_string("alpha = fast\n", "types.cfg");
  REQUIRE_THROWS_WITH(cfg.get_double("alpha", 0.0),
                      Catch::Matchers::ContainsSubstring("alpha") &&
                          Catch::Matchers::ContainsSubstring("fast"));

  KeyValueConfig extra = KeyValueConfig::parse_string("mystery = 1\n", "extra.cfg");
  REQUIRE_THROWS_WITH(extra.require_fully_consumed(),
                      Catch::Matchers::ContainsSubstring("unknown config key 'mystery'") &&
                          Catch::Matchers::ContainsSubstring("extra.cfg"));
}

TEST_CASE("an empty config yields the documented run defaults") {
  RunConfig rc = RunConfig::from_config(KeyValueConfig::parse_string("", "empty"));
  REQUIRE(rc.dataset.kind == "synth");
  REQUIRE(rc.dataset.resize == 60);
  REQUIRE(rc.dataset.train_subset == 2000);
  REQUIRE(rc.dataset.test_subset == 1000);
  REQUIRE(rc.width_mult == 0.125);
  REQUIRE(rc.dropout == 0.25);
  REQUIRE(rc.pool1_kind == PoolKind::regularized);
  REQUIRE(rc.pool1.kernel == 5);
  REQUIRE(rc.pool1.smooth_window == 3);
  REQUIRE(rc.pool1.stride == 5);
  REQUIRE(rc.pool1.padding == regpool::Padding::none);
  REQUIRE(rc.optimizer.kind == regpool::OptimizerSpec::Kind::sgd);
  REQUIRE(rc.optimizer.learning_rate == 1e-2);
  REQUIRE(rc.epochs == 10);
  REQUIRE(rc.batch == 100);
  REQUIRE(rc.seeds == std::vector<std::uint64_t>{1, 2, 3, 4, 5});
  REQUIRE(rc.confusion_epochs == "final");
  REQUIRE(rc.compare_kinds == std::vector<PoolKind>{PoolKind::max, PoolKind::average,
                                                    PoolKind::regularized});
}

TEST_CASE("every config key reaches its RunConfig field") {
  KeyValueConfig cfg = KeyValueConfig::parse_string(
      "dataset.kind = idx\n"
      "dataset.images = a.idx\n"
      "dataset.labels = b.idx\n"
      "dataset.split = 0.8\n"
      "dataset.seed = 7\n"
      "pool.kind = avg\n"
      "pool.n = 3\n"
      "pool.w = 5\n"
      "pool.s = 1\n"
      "pool.padding = same_count\n"
      "optim.kind = adam\n"
      "optim.lr = 0.001\n"
      "optim.beta1 = 0.8\n"
      "train.epochs = 4\n"
      "seeds = 9\n"
      "confusion.epochs = 1,3\n"
      "pairs = 7:9,2:7\n"
      "sweep.n = 2,4\n"
      "compare.kinds = max,reg\n"
      "dump.samples = 1,2\n"
      "dump.channel = 3\n",
      "full");
  RunConfig rc = RunConfig::from_config(cfg);
  REQUIRE(rc.dataset.kind == "idx");
  REQUIRE(rc.dataset.images == "a.idx");
  REQUIRE(rc.dataset.split_fraction == 0.8);
  REQUIRE(rc.pool1_kind == PoolKind::average);
  REQUIRE(rc.pool1.kernel == 3);
  REQUIRE(rc.pool1.smooth_window == 5);
  REQUIRE(rc.pool1.stride == 1);
  REQUIRE(rc.pool1.padding == regpool::Padding::same_count);
  REQUIRE(rc.optimizer.kind == regpool::OptimizerSpec::Kind::adam);
  REQUIRE(rc.optimizer.learning_rate == 0.001);
  REQUIRE(rc.optimizer.beta1 == 0.8);
  REQUIRE(rc.epochs == 4);
  REQUIRE(rc.seeds == std::vector<std::uint64_t>{9});
  REQUIRE(rc.pairs == std::vector<std::pair<int, int>>{{7, 9}, {2, 7}});
  REQUIRE(rc.sweep_n == std::vector<std::size_t>{2, 4});
  REQUIRE(rc.sweep_w.empty());
  REQUIRE(rc.compare_kinds ==
          std::vector<PoolKind>{PoolKind::max, PoolKind::regularized});
  REQUIRE(rc.dump_samples == std::vector<std::size_t>{1, 2});
  REQUIRE(rc.dump_channel == 3);
  REQUIRE(rc.log_confusion_at(1));
  REQUIRE_FALSE(rc.log_confusion_at(2));
  REQUIRE(rc.log_confusion_at(3));
}

TEST_CASE("bad enum values are rejected with the offending token") {
  auto parse = [](const std::string& text) {
    return RunConfig::from_config(KeyValueConfig::parse_string(text, "bad"));
  };
  REQUIRE_THROWS_WITH(parse("pool.kind = median\n"),
                      Catch::Matchers::ContainsSubstring("median"));
  REQUIRE_THROWS_WITH(parse("pool.padding = zeros\n"),
                      Catch::Matchers::ContainsSubstring("zeros"));
  REQUIRE_THROWS_WITH(parse("optim.kind = rmsprop\n"),
                      Catch::Matchers::ContainsSubstring("rmsprop"));
  REQUIRE_THROWS_WITH(parse("pairs = 79\n"),
                      Catch::Matchers::ContainsSubstring("a:b"));
  REQUIRE_THROWS_WITH(parse("pool.w = 2\n"),
                      Catch::Matchers::ContainsSubstring("odd"));
  REQUIRE_THROWS_WITH(parse("typo.key = 1\n"),
                      Catch::Matchers::ContainsSubstring("typo.key"));
}

// ---------------------------------------------------------------------------
// dataset assembly
// ---------------------------------------------------------------------------

TEST_CASE("stratified subsets are balanced and deterministic") {
  regpool::SynthDigitsOptions opt;
  opt.samples_per_class = 8;
  opt.height = 8;
  opt.width = 8;
  regpool::LabeledDataset ds = regpool::make_synth_digits(opt);

  regpool::LabeledDataset sub = regpool::stratified_subset(ds, 25, 11);
  REQUIRE(sub.size() == 25);
  std::map<int, int> counts;
  for (int label : sub.labels) ++counts[label];
  // 25 over 10 classes: the first five classes get the remainder
  for (int k = 0; k < 10; ++k) REQUIRE(counts[k] == (k < 5 ? 3 : 2));

  regpool::LabeledDataset again = regpool::stratified_subset(ds, 25, 11);
  REQUIRE(again.labels == sub.labels);
  for (std::size_t i = 0; i < sub.images.size(); ++i) {
    REQUIRE(again.images[i] == sub.images[i]);
  }

  // asking for more of the whole set than exists keeps everything
  REQUIRE(regpool::stratified_subset(ds, 200, 1).size() == ds.size());

  // but a class that cannot fill its quota is an error
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.labels[i] != 0 || i == 0) keep.push_back(i);  // one sample of class 0
  }
  regpool::LabeledDataset imbalanced = regpool::select(ds, keep);
  REQUIRE_THROWS_WITH(regpool::stratified_subset(imbalanced, 40, 1),
                      Catch::Matchers::ContainsSubstring("class 0 has 1"));
}

TEST_CASE("the synth dataset spec yields the requested train/test sizes") {
  regpool::DatasetSpec spec;
  spec.kind = "synth";
  spec.synth_per_class = 6;
  spec.train_subset = 20;
  spec.test_subset = 10;
  spec.resize = 12;
  spec.seed = 3;
  regpool::DatasetBundle bundle = regpool::load_dataset(spec);
  REQUIRE(bundle.train.size() == 20);
  REQUIRE(bundle.test.size() == 10);
  REQUIRE(bundle.train.height() == 12);
  REQUIRE(bundle.train.width() == 12);
  REQUIRE(bundle.train.num_classes == 10);
}

TEST_CASE("subsetting zero keeps everything and the split stays disjoint") {
  regpool::DatasetSpec spec;
  spec.kind = "synth";
  spec.synth_per_class = 6;
  spec.train_subset = 0;
  spec.test_subset = 0;
  spec.resize = 0;  // keep native dims
  regpool::DatasetBundle bundle = regpool::load_dataset(spec);
  // split 2/3 of 6 per class -> 4 train + 2 test per class
  REQUIRE(bundle.train.size() == 40);
  REQUIRE(bundle.test.size() == 20);
  REQUIRE(bundle.train.height() == 28);
}

// ---------------------------------------------------------------------------
// train command
// ---------------------------------------------------------------------------

TEST_CASE("train writes per-seed metrics, mean metrics, confusion, checkpoint") {
  TempDir dir("train");
  RunConfig rc = tiny_run(dir.path / "out");
  regpool::TrainOutput out = regpool::cmd_train(rc);
  REQUIRE(out.runs.size() == 2);
  REQUIRE(out.runs[0].train_loss.size() == 2);

  const fs::path base = dir.path / "out";
  for (const char* name : {"metrics_seed1.csv", "metrics_seed2.csv",
                           "metrics_mean.csv", "confusion_seed1_epoch2.csv",
                           "confusion_seed2_epoch2.csv", "checkpoint_seed1.rpck",
                           "checkpoint_seed2.rpck"}) {
    INFO(name);
    REQUIRE(fs::exists(base / name));
  }
  REQUIRE_FALSE(fs::exists(base / "confusion_seed1_epoch1.csv"));  // final only

  auto metrics = lines_of(slurp(base / "metrics_seed1.csv"));
  REQUIRE(metrics.size() == 3);  // header + one row per epoch
  REQUIRE(metrics[0] == "seed,epoch,train_loss,test_acc");
  REQUIRE(metrics[1].rfind("1,1,", 0) == 0);
  REQUIRE(metrics[2].rfind("1,2,", 0) == 0);

  auto mean = lines_of(slurp(base / "metrics_mean.csv"));
  REQUIRE(mean.size() == 3);
  REQUIRE(mean[0] == "epoch,train_loss,test_acc");

  // confusion rows sum to the test set size
  auto confusion = lines_of(slurp(base / "confusion_seed1_epoch2.csv"));
  REQUIRE(confusion.size() == 11);  // header + 10 classes
  std::size_t total = 0;
  for (std::size_t r = 1; r < confusion.size(); ++r) {
    std::istringstream row(confusion[r]);
    std::string cell;
    std::getline(row, cell, ',');  // truth label name
    while (std::getline(row, cell, ',')) total += std::stoul(cell);
  }
  REQUIRE(total == 10);
}

TEST_CASE("identical configs produce byte-identical artifacts") {
  TempDir dir("determinism");
  RunConfig first = tiny_run(dir.path / "a");
  RunConfig second = tiny_run(dir.path / "b");
  regpool::cmd_train(first);
  regpool::cmd_train(second);
  for (const char* name : {"metrics_seed1.csv", "metrics_seed2.csv",
                           "metrics_mean.csv", "confusion_seed1_epoch2.csv",
                           "checkpoint_seed1.rpck"}) {
    INFO(name);
    REQUIRE(slurp(dir.path / "a" / name) == slurp(dir.path / "b" / name));
  }
}

TEST_CASE("training metrics are invariant to artifact location") {
  // the out dir must never leak into the numbers
  TempDir dir("location");
  regpool::TrainOutput a = regpool::cmd_train(tiny_run(dir.path / "deep" / "x"));
  regpool::TrainOutput b = regpool::cmd_train(tiny_run(dir.path / "y"));
  REQUIRE(a.runs[0].test_acc == b.runs[0].test_acc);
  REQUIRE(a.runs[0].train_loss == b.runs[0].train_loss);
}

TEST_CASE("window-of-one regularized training equals max-pool training") {
  TempDir dir("degenerate");
  RunConfig reg = tiny_run(dir.path / "reg", "");
  reg.pool1.smooth_window = 1;
  RunConfig max = reg;
  max.pool1_kind = PoolKind::max;
  max.out_dir = (dir.path / "max").string();
  regpool::cmd_train(reg);
  regpool::cmd_train(max);
  for (const char* name :
       {"metrics_seed1.csv", "metrics_seed2.csv", "metrics_mean.csv"}) {
    INFO(name);
    REQUIRE(slurp(dir.path / "reg" / name) == slurp(dir.path / "max" / name));
  }
}

// ---------------------------------------------------------------------------
// compare command
// ---------------------------------------------------------------------------

TEST_CASE("compare writes long-format and mean CSVs over every kind") {
  TempDir dir("compare");
  RunConfig rc = tiny_run(dir.path / "out", "compare.kinds = max,avg,reg\n");
  regpool::CompareOutput out = regpool::cmd_compare(rc);
  REQUIRE(out.runs_by_kind.size() == 3);

  auto rows = lines_of(slurp(dir.path / "out" / "compare.csv"));
  REQUIRE(rows.size() == 1 + 3 * 2 * 2);  // header + kinds * seeds * epochs
  REQUIRE(rows[0] == "kind,seed,epoch,test_acc");
  REQUIRE(rows[1].rfind("max,1,1,", 0) == 0);
  REQUIRE(rows.back().rfind("regularized,2,2,", 0) == 0);

  auto mean = lines_of(slurp(dir.path / "out" / "compare_mean.csv"));
  REQUIRE(mean.size() == 1 + 3 * 2);  // header + kinds * epochs
  REQUIRE(mean[0] == "kind,epoch,test_acc");

  // the mean rows agree with the per-seed rows
  const auto& reg_runs = out.runs_by_kind[2];
  const double want = (reg_runs[0].test_acc[1] + reg_runs[1].test_acc[1]) / 2.0;
  std::istringstream last(mean.back());
  std::string kind, epoch, acc;
  std::getline(last, kind, ',');
  std::getline(last, epoch, ',');
  std::getline(last, acc, ',');
  REQUIRE(kind == "regularized");
  REQUIRE(epoch == "2");
  REQUIRE(std::stod(acc) == want);
}

TEST_CASE("compared kinds share initial weights seed by seed") {
  TempDir dir("shared_init");
  RunConfig rc = tiny_run(dir.path / "out", "compare.kinds = max,reg\n");
  rc.pool1.smooth_window = 1;  // degenerate: identical trajectories expected
  regpool::CompareOutput out = regpool::cmd_compare(rc);
  REQUIRE(out.runs_by_kind[0].size() == out.runs_by_kind[1].size());
  for (std::size_t s = 0; s < out.runs_by_kind[0].size(); ++s) {
    REQUIRE(out.runs_by_kind[0][s].test_acc == out.runs_by_kind[1][s].test_acc);
    REQUIRE(out.runs_by_kind[0][s].train_loss == out.runs_by_kind[1][s].train_loss);
  }
}

// ---------------------------------------------------------------------------
// sweep command
// ---------------------------------------------------------------------------

TEST_CASE("sweep trains one subdirectory per grid cell with a manifest") {
  TempDir dir("sweep");
  RunConfig rc = tiny_run(dir.path / "out",
                          "sweep.n = 2,3\n"
                          "sweep.w = 1,3\n");
  rc.seeds = {1};
  rc.epochs = 1;
  regpool::cmd_sweep(rc);

  auto manifest = lines_of(slurp(dir.path / "out" / "manifest.csv"));
  REQUIRE(manifest.size() == 5);  // header + 4 cells
  REQUIRE(manifest[0] == "cell,n,w,s,dir");
  REQUIRE(manifest[1] == "0,2,1,2,n2_w1_s2");
  REQUIRE(manifest[4] == "3,3,3,2,n3_w3_s2");
  for (const char* cell : {"n2_w1_s2", "n2_w3_s2", "n3_w1_s2", "n3_w3_s2"}) {
    INFO(cell);
    REQUIRE(fs::exists(dir.path / "out" / cell / "metrics_mean.csv"));
  }
}

TEST_CASE("sweep without any grid keys is rejected") {
  TempDir dir("sweep_bad");
  RunConfig rc = tiny_run(dir.path / "out");
  REQUIRE_THROWS_WITH(regpool::cmd_sweep(rc),
                      Catch::Matchers::ContainsSubstring("empty grid"));
}

// ---------------------------------------------------------------------------
// pairs command
// ---------------------------------------------------------------------------

TEST_CASE("pair counts equal the summed confusion entries every epoch") {
  TempDir dir("pairs");
  RunConfig rc = tiny_run(dir.path / "out", "pairs = 7:9,2:7\n");
  regpool::PairsOutput out = regpool::cmd_pairs(rc);
  REQUIRE(out.counts.size() == 2);
  REQUIRE(out.runs.size() == 2);

  for (std::size_t p = 0; p < 2; ++p) {
    const auto [a, b] = rc.pairs[p];
    for (std::size_t r = 0; r < out.runs.size(); ++r) {
      for (std::size_t e = 0; e < rc.epochs; ++e) {
        const auto& eval = out.runs[r].evals[e];
        REQUIRE(out.counts[p][r][e] ==
                eval.confusion_at(static_cast<std::size_t>(a),
                                  static_cast<std::size_t>(b)) +
                    eval.confusion_at(static_cast<std::size_t>(b),
                                      static_cast<std::size_t>(a)));
      }
    }
  }

  auto rows = lines_of(slurp(dir.path / "out" / "pairs.csv"));
  REQUIRE(rows.size() == 1 + 2 * 2);  // header + seeds * epochs
  REQUIRE(rows[0] == "seed,epoch,pair_7_9,pair_2_7");
  REQUIRE(fs::exists(dir.path / "out" / "pairs_mean.csv"));
}

TEST_CASE("pairs validates its configuration") {
  TempDir dir("pairs_bad");
  RunConfig rc = tiny_run(dir.path / "out");
  REQUIRE_THROWS_WITH(regpool::cmd_pairs(rc),
                      Catch::Matchers::ContainsSubstring("no class pairs"));
  rc.pairs = {{7, 12}};
  REQUIRE_THROWS_WITH(regpool::cmd_pairs(rc),
                      Catch::Matchers::ContainsSubstring("7:12"));
}

// ---------------------------------------------------------------------------
// dump-maps command
// ---------------------------------------------------------------------------

TEST_CASE("dump-maps writes original plus three pooled views per sample") {
  TempDir dir("dump");
  RunConfig rc = tiny_run(dir.path / "out");
  rc.dump_samples = {0, 3};
  rc.dump_channel = 0;
  regpool::cmd_dump_maps(rc);
  for (const char* name :
       {"sample0_ch0_original.pgm", "sample0_ch0_max.pgm", "sample0_ch0_avg.pgm",
        "sample0_ch0_regularized.pgm", "sample3_ch0_original.pgm",
        "sample3_ch0_max.pgm", "sample3_ch0_avg.pgm",
        "sample3_ch0_regularized.pgm"}) {
    INFO(name);
    REQUIRE(fs::exists(dir.path / "out" / name));
  }

  // degenerate window: the regularized map is the max map, byte for byte
  RunConfig degenerate = tiny_run(dir.path / "deg");
  degenerate.pool1.smooth_window = 1;
  regpool::cmd_dump_maps(degenerate);
  REQUIRE(slurp(dir.path / "deg" / "sample0_ch0_regularized.pgm") ==
          slurp(dir.path / "deg" / "sample0_ch0_max.pgm"));
}

TEST_CASE("dump-maps can restore weights from a train checkpoint") {
  TempDir dir("dump_ckpt");
  // large steps so the trained weights differ visibly after 8-bit rendering
  RunConfig rc = tiny_run(dir.path / "out", "optim.lr = 0.5\n");
  regpool::cmd_train(rc);
  rc.dump_checkpoint = (dir.path / "out" / "checkpoint_seed1.rpck").string();
  rc.out_dir = (dir.path / "maps").string();
  regpool::cmd_dump_maps(rc);
  REQUIRE(fs::exists(dir.path / "maps" / "sample0_ch0_original.pgm"));

  // trained weights produce a different feature map than fresh init
  RunConfig fresh = tiny_run(dir.path / "fresh");
  regpool::cmd_dump_maps(fresh);
  REQUIRE(slurp(dir.path / "maps" / "sample0_ch0_original.pgm") !=
          slurp(dir.path / "fresh" / "sample0_ch0_original.pgm"));
}

TEST_CASE("dump-maps rejects out-of-range samples and channels") {
  TempDir dir("dump_bad");
  RunConfig rc = tiny_run(dir.path / "out");
  rc.dump_samples = {99};
  REQUIRE_THROWS_WITH(regpool::cmd_dump_maps(rc),
                      Catch::Matchers::ContainsSubstring("sample id 99"));
  rc.dump_samples = {0};
  rc.dump_channel = 64;
  REQUIRE_THROWS_WITH(regpool::cmd_dump_maps(rc),
                      Catch::Matchers::ContainsSubstring("channel 64"));
}
