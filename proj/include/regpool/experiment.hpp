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

// Experiment driver: key=value run configs, deterministic dataset assembly,
// multi-seed training runs, pooling comparisons, hyperparameter sweeps,
// class-pair misrecognition tracking, and pooled-feature-map dumps. Every
// artifact is reproducible byte-for-byte from (config, seed).

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "regpool/checkpoint.hpp"
#include "regpool/data.hpp"
#include "regpool/nn.hpp"
#include "regpool/optim.hpp"
#include "regpool/pooling.hpp"
#include "regpool/rng.hpp"
#include "regpool/synthdata.hpp"
#include "regpool/tensor.hpp"
#include "regpool/train.hpp"

namespace regpool {

// ---------------------------------------------------------------------------
// Config file: line-oriented `key = value`, '#' comment lines, dotted keys
// ---------------------------------------------------------------------------

class KeyValueConfig {
 public:
  static KeyValueConfig parse_string(const std::string& text,
                                     const std::string& origin = "<config>") {
    KeyValueConfig cfg;
    cfg.origin_ = origin;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const std::string trimmed = trim(line);
      if (trimmed.empty() || trimmed[0] == '#') continue;
      const std::size_t eq = trimmed.find('=');
      if (eq == std::string::npos) {
        throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                 ": expected 'key = value'");
      }
      const std::string key = trim(trimmed.substr(0, eq));
      const std::string value = trim(trimmed.substr(eq + 1));
      if (key.empty()) {
        throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": empty key");
      }
      if (cfg.entries_.count(key)) {
        throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                 ": duplicate key '" + key + "'");
      }
      cfg.entries_[key] = {value, false};
    }
    return cfg;
  }

  static KeyValueConfig parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config file '" + path + "'");
    std::ostringstream text;
    text << is.rdbuf();
    return parse_string(text.str(), path);
  }

  /// Override (or add) a key, e.g. from a `--set key=value` flag.
  void set(const std::string& key, const std::string& value) {
    entries_[key] = {value, false};
  }

  bool has(const std::string& key) const { return entries_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    it->second.consumed = true;
    return it->second.value;
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    it->second.consumed = true;
    return parse_double(key, it->second.value);
  }

  std::size_t get_size(const std::string& key, std::size_t fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    it->second.consumed = true;
    const double v = parse_double(key, it->second.value);
    if (v < 0.0 || v != static_cast<double>(static_cast<std::size_t>(v))) {
      throw std::runtime_error("config key '" + key + "': expected a non-negative integer, got '" +
                               it->second.value + "'");
    }
    return static_cast<std::size_t>(v);
  }

  /// After building a run config, every present key must have been read;
  /// anything left over is a typo or an unknown option.
  void require_fully_consumed() const {
    for (const auto& [key, entry] : entries_) {
      if (!entry.consumed) {
        throw std::runtime_error("unknown config key '" + key + "' in " + origin_);
      }
    }
  }

  static std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
  }

 private:
  struct Entry {
    std::string value;
    mutable bool consumed = false;
  };

  static double parse_double(const std::string& key, const std::string& value) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(value, &used);
    } catch (const std::exception&) {
      throw std::runtime_error("config key '" + key + "': cannot parse '" + value + "' as a number");
    }
    if (used != value.size()) {
      throw std::runtime_error("config key '" + key + "': cannot parse '" + value + "' as a number");
    }
    return v;
  }

  std::map<std::string, Entry> entries_;
  std::string origin_ = "<config>";
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(text);
  while (std::getline(is, item, sep)) {
    const std::string t = KeyValueConfig::trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

inline std::vector<std::size_t> parse_size_list(const std::string& key,
                                                const std::string& text) {
  std::vector<std::size_t> out;
  for (const std::string& item : split_list(text, ',')) {
    try {
      out.push_back(static_cast<std::size_t>(std::stoull(item)));
    } catch (const std::exception&) {
      throw std::runtime_error("config key '" + key + "': cannot parse '" + item +
                               "' as an integer");
    }
  }
  return out;
}

// deterministic, locale-free float formatting for CSV artifacts
inline std::string csv_double(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::ofstream open_artifact(const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);  // binary: no newline translation
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  return os;
}

// rng stream salts so that shuffling, weight init, and dataset assembly
// never share a sequence even under equal seeds
constexpr std::uint64_t kInitSalt = 0x9d2c5681a5f4b3d1ull;
constexpr std::uint64_t kTrainSalt = 0x6c078965731d8b2full;
constexpr std::uint64_t kSplitSalt = 0x41c64e6da3b19e67ull;
constexpr std::uint64_t kSubsetSalt = 0xb5297a4d2f6e1c49ull;

}  // namespace detail

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct DatasetSpec {
  std::string kind = "synth";  // synth | idx | image-dir
  std::string images, labels;            // idx train pair
  std::string test_images, test_labels;  // idx test pair (optional)
  std::string dir;                       // image-dir root
  std::string extension;                 // image-dir filter ("" = .pgm/.ppm)
  double split_fraction = 2.0 / 3.0;     // used when no test pair is given
  std::uint64_t seed = 0;                // split / subset / synthesis seed
  std::size_t resize = 60;               // 0 = keep native dims
  std::size_t train_subset = 2000;       // 0 = all
  std::size_t test_subset = 1000;        // 0 = all
  std::size_t synth_per_class = 300;
  // default deformation calibrated so desk-scale runs train to plateau
  // within a few epochs while the corpus stays visibly deformed
  double synth_deform = 0.5;
};

struct RunConfig {
  DatasetSpec dataset;
  double width_mult = 0.125;
  double dropout = 0.25;
  PoolKind pool1_kind = PoolKind::regularized;
  PoolConfig pool1{5, 3, 5, Padding::none};
  OptimizerSpec optimizer = OptimizerSpec::sgd(1e-2);
  std::size_t epochs = 10;
  std::size_t batch = 100;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string out_dir = "runs/out";
  std::string confusion_epochs = "final";  // all | final | comma list (1-based)
  std::vector<std::pair<int, int>> pairs;
  std::vector<std::size_t> sweep_n, sweep_w, sweep_s;
  std::vector<PoolKind> compare_kinds = {PoolKind::max, PoolKind::average,
                                         PoolKind::regularized};
  std::string dump_checkpoint;
  std::vector<std::size_t> dump_samples = {0};
  std::size_t dump_channel = 0;

  static RunConfig from_config(const KeyValueConfig& cfg) {
    RunConfig rc;
    rc.dataset.kind = cfg.get_string("dataset.kind", rc.dataset.kind);
    rc.dataset.images = cfg.get_string("dataset.images", "");
    rc.dataset.labels = cfg.get_string("dataset.labels", "");
    rc.dataset.test_images = cfg.get_string("dataset.test_images", "");
    rc.dataset.test_labels = cfg.get_string("dataset.test_labels", "");
    rc.dataset.dir = cfg.get_string("dataset.dir", "");
    rc.dataset.extension = cfg.get_string("dataset.extension", "");
    rc.dataset.split_fraction = cfg.get_double("dataset.split", rc.dataset.split_fraction);
    rc.dataset.seed = cfg.get_size("dataset.seed", 0);
    rc.dataset.resize = cfg.get_size("dataset.resize", rc.dataset.resize);
    rc.dataset.train_subset = cfg.get_size("dataset.train_subset", rc.dataset.train_subset);
    rc.dataset.test_subset = cfg.get_size("dataset.test_subset", rc.dataset.test_subset);
    rc.dataset.synth_per_class = cfg.get_size("dataset.synth_per_class", rc.dataset.synth_per_class);
    rc.dataset.synth_deform = cfg.get_double("dataset.synth_deform", rc.dataset.synth_deform);

    rc.width_mult = cfg.get_double("model.width", rc.width_mult);
    rc.dropout = cfg.get_double("model.dropout", rc.dropout);

    rc.pool1_kind = pool_kind_from_string(cfg.get_string("pool.kind", "regularized"));
    rc.pool1.kernel = cfg.get_size("pool.n", rc.pool1.kernel);
    rc.pool1.smooth_window = cfg.get_size("pool.w", rc.pool1.smooth_window);
    rc.pool1.stride = cfg.get_size("pool.s", rc.pool1.stride);
    const std::string padding = cfg.get_string("pool.padding", "none");
    if (padding == "none") {
      rc.pool1.padding = Padding::none;
    } else if (padding == "same_count") {
      rc.pool1.padding = Padding::same_count;
    } else {
      throw std::runtime_error("config key 'pool.padding': expected none or same_count, got '" +
                               padding + "'");
    }
    rc.pool1.validate();

    const std::string optim = cfg.get_string("optim.kind", "sgd");
    if (optim == "sgd") {
      rc.optimizer = OptimizerSpec::sgd(cfg.get_double("optim.lr", 1e-2));
      // consume adam keys even under sgd so switching kinds never flips a
      // previously valid config into an unknown-key error
      cfg.get_double("optim.beta1", 0.9);
      cfg.get_double("optim.beta2", 0.99);
      cfg.get_double("optim.epsilon", 1e-8);
    } else if (optim == "adam") {
      rc.optimizer = OptimizerSpec::adam(
          cfg.get_double("optim.lr", 1e-4), cfg.get_double("optim.beta1", 0.9),
          cfg.get_double("optim.beta2", 0.99), cfg.get_double("optim.epsilon", 1e-8));
    } else {
      throw std::runtime_error("config key 'optim.kind': expected sgd or adam, got '" + optim + "'");
    }
    rc.optimizer.validate();

    rc.epochs = cfg.get_size("train.epochs", rc.epochs);
    rc.batch = cfg.get_size("train.batch", rc.batch);
    if (rc.epochs < 1) throw std::runtime_error("config key 'train.epochs': must be >= 1");
    if (rc.batch < 1) throw std::runtime_error("config key 'train.batch': must be >= 1");

    const std::string seeds = cfg.get_string("seeds", "1,2,3,4,5");
    rc.seeds.clear();
    for (std::size_t s : detail::parse_size_list("seeds", seeds)) {
      rc.seeds.push_back(static_cast<std::uint64_t>(s));
    }
    if (rc.seeds.empty()) throw std::runtime_error("config key 'seeds': seed list must be non-empty");

    rc.out_dir = cfg.get_string("out", rc.out_dir);
    rc.confusion_epochs = cfg.get_string("confusion.epochs", rc.confusion_epochs);
    if (rc.confusion_epochs != "all" && rc.confusion_epochs != "final") {
      detail::parse_size_list("confusion.epochs", rc.confusion_epochs);  // validate now
    }

    for (const std::string& pair : detail::split_list(cfg.get_string("pairs", ""), ',')) {
      const std::size_t colon = pair.find(':');
      if (colon == std::string::npos) {
        throw std::runtime_error("config key 'pairs': expected a:b entries, got '" + pair + "'");
      }
      try {
        rc.pairs.emplace_back(std::stoi(pair.substr(0, colon)),
                              std::stoi(pair.substr(colon + 1)));
      } catch (const std::exception&) {
        throw std::runtime_error("config key 'pairs': cannot parse '" + pair + "'");
      }
    }

    if (cfg.has("sweep.n")) rc.sweep_n = detail::parse_size_list("sweep.n", cfg.get_string("sweep.n", ""));
    if (cfg.has("sweep.w")) rc.sweep_w = detail::parse_size_list("sweep.w", cfg.get_string("sweep.w", ""));
    if (cfg.has("sweep.s")) rc.sweep_s = detail::parse_size_list("sweep.s", cfg.get_string("sweep.s", ""));

    rc.compare_kinds.clear();
    for (const std::string& kind :
         detail::split_list(cfg.get_string("compare.kinds", "max,avg,regularized"), ',')) {
      rc.compare_kinds.push_back(pool_kind_from_string(kind));
    }
    if (rc.compare_kinds.empty()) {
      throw std::runtime_error("config key 'compare.kinds': kind list must be non-empty");
    }

    rc.dump_checkpoint = cfg.get_string("dump.checkpoint", "");
    rc.dump_samples = detail::parse_size_list("dump.samples", cfg.get_string("dump.samples", "0"));
    rc.dump_channel = cfg.get_size("dump.channel", 0);
    if (rc.dump_samples.empty()) {
      throw std::runtime_error("config key 'dump.samples': sample list must be non-empty");
    }

    cfg.require_fully_consumed();
    return rc;
  }

  /// Should a confusion-matrix CSV be written for this (1-based) epoch?
  bool log_confusion_at(std::size_t epoch) const {
    if (confusion_epochs == "all") return true;
    if (confusion_epochs == "final") return epoch == epochs;
    for (std::size_t e : detail::parse_size_list("confusion.epochs", confusion_epochs)) {
      if (e == epoch) return true;
    }
    return false;
  }
};

// ---------------------------------------------------------------------------
// Dataset assembly
// ---------------------------------------------------------------------------

struct DatasetBundle {
  LabeledDataset train;
  LabeledDataset test;
};

/// Deterministic stratified subset of `count` samples (0 = keep all): class
/// quotas count/K (+1 for the first count%K classes), members chosen by a
/// seeded per-class shuffle, original order preserved.
inline LabeledDataset stratified_subset(const LabeledDataset& ds,
                                        std::size_t count, std::uint64_t seed) {
  if (count == 0 || count >= ds.size()) return ds;
  const std::size_t k = ds.num_classes;
  std::vector<std::vector<std::size_t>> per_class(k);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    per_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  }
  Rng rng(mix64(seed ^ detail::kSubsetSalt));
  std::vector<std::size_t> chosen;
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t quota = count / k + (c < count % k ? 1 : 0);
    if (per_class[c].size() < quota) {
      throw std::runtime_error("subset: class " + std::to_string(c) + " has " +
                               std::to_string(per_class[c].size()) +
                               " samples, need " + std::to_string(quota));
    }
    rng.shuffle(per_class[c]);
    chosen.insert(chosen.end(), per_class[c].begin(),
                  per_class[c].begin() + static_cast<std::ptrdiff_t>(quota));
  }
  std::sort(chosen.begin(), chosen.end());
  return select(ds, chosen);
}

/// Assemble train/test sets per the DatasetSpec: load or synthesize, split
/// if no test set ships with the data, subset, then resize. Depends only on
/// DatasetSpec fields (notably dataset.seed), never on per-run training seeds.
inline DatasetBundle load_dataset(const DatasetSpec& spec) {
  DatasetBundle bundle;
  if (spec.kind == "synth") {
    SynthDigitsOptions opt;
    opt.samples_per_class = spec.synth_per_class;
    opt.seed = spec.seed;
    opt.deform = spec.synth_deform;
    if (spec.resize > 0) {
      // rasterize at the target resolution directly; upscaling a coarse
      // render would smear the small holes and gaps the glyphs rely on
      opt.height = spec.resize;
      opt.width = spec.resize;
    }
    LabeledDataset all = make_synth_digits(opt);
    std::tie(bundle.train, bundle.test) =
        split(all, spec.split_fraction, mix64(spec.seed ^ detail::kSplitSalt));
  } else if (spec.kind == "idx") {
    if (spec.images.empty() || spec.labels.empty()) {
      throw std::runtime_error("config: dataset.kind=idx requires dataset.images and dataset.labels");
    }
    LabeledDataset train = load_idx(spec.images, spec.labels);
    if (!spec.test_images.empty()) {
      bundle.train = std::move(train);
      bundle.test = load_idx(spec.test_images, spec.test_labels);
    } else {
      std::tie(bundle.train, bundle.test) =
          split(train, spec.split_fraction, mix64(spec.seed ^ detail::kSplitSalt));
    }
  } else if (spec.kind == "image-dir") {
    if (spec.dir.empty()) {
      throw std::runtime_error("config: dataset.kind=image-dir requires dataset.dir");
    }
    LabeledDataset all = load_image_dir(spec.dir, spec.extension);
    std::tie(bundle.train, bundle.test) =
        split(all, spec.split_fraction, mix64(spec.seed ^ detail::kSplitSalt));
  } else {
    throw std::runtime_error("config key 'dataset.kind': expected synth, idx or image-dir, got '" +
                             spec.kind + "'");
  }

  if (bundle.train.num_classes != bundle.test.num_classes) {
    const std::size_t k = std::max(bundle.train.num_classes, bundle.test.num_classes);
    bundle.train.num_classes = bundle.test.num_classes = k;
  }
  bundle.train = stratified_subset(bundle.train, spec.train_subset, spec.seed);
  bundle.test = stratified_subset(bundle.test, spec.test_subset, mix64(spec.seed + 1));
  if (spec.resize != 0) {
    bundle.train = resize_dataset(bundle.train, spec.resize, spec.resize);
    bundle.test = resize_dataset(bundle.test, spec.resize, spec.resize);
  }
  return bundle;
}

// ---------------------------------------------------------------------------
// Per-seed run
// ---------------------------------------------------------------------------

struct SeedRun {
  std::uint64_t seed = 0;
  PoolKind kind = PoolKind::max;
  std::vector<double> train_loss;  // index = epoch - 1
  std::vector<double> test_acc;
  std::vector<EvalResult> evals;   // full per-epoch test evaluation
};

inline LayerGraph build_run_graph(const RunConfig& rc, const DatasetBundle& data,
                                  PoolKind kind, std::uint64_t seed) {
  Rng init_rng(mix64(seed ^ detail::kInitSalt));
  return LayerGraph::build(
      table_network_descriptors(rc.width_mult, kind, rc.pool1,
                                data.train.num_classes, rc.dropout),
      {1, data.train.height(), data.train.width()}, init_rng);
}

/// Train one (pooling kind, seed) cell for rc.epochs epochs. Weight init
/// depends only on the seed — parameter shapes are pooling-independent, so
/// compare runs share initial weights per seed. If `graph_out` is non-null
/// the trained graph is moved there (for checkpointing).
inline SeedRun run_seed(const RunConfig& rc, const DatasetBundle& data,
                        PoolKind kind, std::uint64_t seed,
                        LayerGraph* graph_out = nullptr) {
  LayerGraph graph = build_run_graph(rc, data, kind, seed);
  Optimizer optimizer(rc.optimizer);
  Rng train_rng(mix64(seed ^ detail::kTrainSalt));

  SeedRun run;
  run.seed = seed;
  run.kind = kind;
  for (std::size_t epoch = 1; epoch <= rc.epochs; ++epoch) {
    const EpochMetrics metrics = train_epoch(graph, data.train.images,
                                             data.train.labels, optimizer,
                                             rc.batch, train_rng);
    EvalResult eval = evaluate(graph, data.test.images, data.test.labels,
                               data.test.num_classes, rc.batch);
    run.train_loss.push_back(metrics.mean_loss);
    run.test_acc.push_back(eval.accuracy);
    run.evals.push_back(std::move(eval));
  }
  if (graph_out != nullptr) *graph_out = std::move(graph);
  return run;
}

// ---------------------------------------------------------------------------
// Artifact writers
// ---------------------------------------------------------------------------

namespace detail {

inline void write_metrics_csv(const std::filesystem::path& path,
                              const SeedRun& run) {
  std::ofstream os = open_artifact(path);
  os << "seed,epoch,train_loss,test_acc\n";
  for (std::size_t e = 0; e < run.train_loss.size(); ++e) {
    os << run.seed << "," << e + 1 << "," << csv_double(run.train_loss[e])
       << "," << csv_double(run.test_acc[e]) << "\n";
  }
}

inline void write_mean_csv(const std::filesystem::path& path,
                           const std::vector<SeedRun>& runs) {
  std::ofstream os = open_artifact(path);
  os << "epoch,train_loss,test_acc\n";
  if (runs.empty()) return;
  const double inv = 1.0 / static_cast<double>(runs.size());
  for (std::size_t e = 0; e < runs.front().train_loss.size(); ++e) {
    double loss = 0.0, acc = 0.0;
    for (const SeedRun& run : runs) {
      loss += run.train_loss[e];
      acc += run.test_acc[e];
    }
    os << e + 1 << "," << csv_double(loss * inv) << "," << csv_double(acc * inv) << "\n";
  }
}

inline void write_confusion_csv(const std::filesystem::path& path,
                                const EvalResult& eval,
                                const std::vector<std::string>& class_names) {
  std::ofstream os = open_artifact(path);
  os << "truth/pred";
  for (std::size_t c = 0; c < eval.num_classes; ++c) {
    os << "," << (c < class_names.size() ? class_names[c] : std::to_string(c));
  }
  os << "\n";
  for (std::size_t t = 0; t < eval.num_classes; ++t) {
    os << (t < class_names.size() ? class_names[t] : std::to_string(t));
    for (std::size_t p = 0; p < eval.num_classes; ++p) {
      os << "," << eval.confusion_at(t, p);
    }
    os << "\n";
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct TrainOutput {
  std::vector<SeedRun> runs;  // one per seed, rc.pool1_kind
};

/// `train`: per-seed metrics CSVs + mean CSV + confusion CSVs at requested
/// epochs + final parameter checkpoint per seed.
inline TrainOutput cmd_train(const RunConfig& rc) {
  const DatasetBundle data = load_dataset(rc.dataset);
  const std::filesystem::path out(rc.out_dir);
  TrainOutput output;
  for (std::uint64_t seed : rc.seeds) {
    LayerGraph graph;  // receives the trained graph for checkpointing
    SeedRun run = run_seed(rc, data, rc.pool1_kind, seed, &graph);
    detail::write_metrics_csv(out / ("metrics_seed" + std::to_string(seed) + ".csv"), run);
    for (std::size_t e = 1; e <= rc.epochs; ++e) {
      if (rc.log_confusion_at(e)) {
        detail::write_confusion_csv(out / ("confusion_seed" + std::to_string(seed) +
                                           "_epoch" + std::to_string(e) + ".csv"),
                                    run.evals[e - 1], data.test.class_names);
      }
    }
    save_checkpoint((out / ("checkpoint_seed" + std::to_string(seed) + ".rpck")).string(),
                    graph);
    output.runs.push_back(std::move(run));
  }
  detail::write_mean_csv(out / "metrics_mean.csv", output.runs);
  return output;
}

struct CompareOutput {
  std::vector<std::vector<SeedRun>> runs_by_kind;  // index matches rc.compare_kinds
};

/// `compare`: one run per (pooling kind, seed) on identical data and initial
/// weights; long-format profile CSV plus a per-kind mean CSV.
inline CompareOutput cmd_compare(const RunConfig& rc) {
  const DatasetBundle data = load_dataset(rc.dataset);
  const std::filesystem::path out(rc.out_dir);
  CompareOutput output;
  for (PoolKind kind : rc.compare_kinds) {
    std::vector<SeedRun> runs;
    for (std::uint64_t seed : rc.seeds) {
      runs.push_back(run_seed(rc, data, kind, seed));
    }
    output.runs_by_kind.push_back(std::move(runs));
  }

  std::ofstream os = detail::open_artifact(out / "compare.csv");
  os << "kind,seed,epoch,test_acc\n";
  for (std::size_t k = 0; k < rc.compare_kinds.size(); ++k) {
    for (const SeedRun& run : output.runs_by_kind[k]) {
      for (std::size_t e = 0; e < run.test_acc.size(); ++e) {
        os << to_string(rc.compare_kinds[k]) << "," << run.seed << "," << e + 1
           << "," << detail::csv_double(run.test_acc[e]) << "\n";
      }
    }
  }

  std::ofstream mean = detail::open_artifact(out / "compare_mean.csv");
  mean << "kind,epoch,test_acc\n";
  for (std::size_t k = 0; k < rc.compare_kinds.size(); ++k) {
    const auto& runs = output.runs_by_kind[k];
    const double inv = 1.0 / static_cast<double>(runs.size());
    for (std::size_t e = 0; e < rc.epochs; ++e) {
      double acc = 0.0;
      for (const SeedRun& run : runs) acc += run.test_acc[e];
      mean << to_string(rc.compare_kinds[k]) << "," << e + 1 << ","
           << detail::csv_double(acc * inv) << "\n";
    }
  }
  return output;
}

/// `sweep`: Cartesian grid over pool.n / pool.w / pool.s; each cell is a full
/// multi-seed train run in its own subdirectory, indexed by a manifest CSV.
/// Grid keys left unset default to the base pool config; a key explicitly set
/// to an empty list is a config error (caught in from_config/parse).
inline void cmd_sweep(const RunConfig& rc) {
  const std::vector<std::size_t> ns = rc.sweep_n.empty()
                                          ? std::vector<std::size_t>{rc.pool1.kernel}
                                          : rc.sweep_n;
  const std::vector<std::size_t> ws = rc.sweep_w.empty()
                                          ? std::vector<std::size_t>{rc.pool1.smooth_window}
                                          : rc.sweep_w;
  const std::vector<std::size_t> ss = rc.sweep_s.empty()
                                          ? std::vector<std::size_t>{rc.pool1.stride}
                                          : rc.sweep_s;
  if (rc.sweep_n.empty() && rc.sweep_w.empty() && rc.sweep_s.empty()) {
    throw std::runtime_error("sweep: empty grid (set at least one of sweep.n / sweep.w / sweep.s)");
  }

  const std::filesystem::path out(rc.out_dir);
  std::ofstream manifest = detail::open_artifact(out / "manifest.csv");
  manifest << "cell,n,w,s,dir\n";
  std::size_t cell = 0;
  for (std::size_t n : ns) {
    for (std::size_t w : ws) {
      for (std::size_t s : ss) {
        RunConfig cell_rc = rc;
        cell_rc.pool1.kernel = n;
        cell_rc.pool1.smooth_window = w;
        cell_rc.pool1.stride = s;
        cell_rc.pool1.validate();
        const std::string dir = "n" + std::to_string(n) + "_w" + std::to_string(w) +
                                "_s" + std::to_string(s);
        cell_rc.out_dir = (out / dir).string();
        cmd_train(cell_rc);
        manifest << cell << "," << n << "," << w << "," << s << "," << dir << "\n";
        ++cell;
      }
    }
  }
}

struct PairsOutput {
  std::vector<SeedRun> runs;
  // counts[pair][seed][epoch] = confusion[a][b] + confusion[b][a]
  std::vector<std::vector<std::vector<std::size_t>>> counts;
};

/// `pairs`: per-epoch misrecognition counts for tracked unordered class
/// pairs, derived from the per-epoch confusion matrices of a train run.
inline PairsOutput cmd_pairs(const RunConfig& rc) {
  if (rc.pairs.empty()) {
    throw std::runtime_error("pairs: no class pairs configured (set pairs = a:b,c:d)");
  }
  const DatasetBundle data = load_dataset(rc.dataset);
  for (const auto& [a, b] : rc.pairs) {
    if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= data.test.num_classes ||
        static_cast<std::size_t>(b) >= data.test.num_classes) {
      throw std::runtime_error("pairs: class pair " + std::to_string(a) + ":" +
                               std::to_string(b) + " not in dataset (" +
                               std::to_string(data.test.num_classes) + " classes)");
    }
  }

  PairsOutput output;
  output.counts.assign(rc.pairs.size(), {});
  for (std::uint64_t seed : rc.seeds) {
    SeedRun run = run_seed(rc, data, rc.pool1_kind, seed);
    for (std::size_t p = 0; p < rc.pairs.size(); ++p) {
      const auto [a, b] = rc.pairs[p];
      std::vector<std::size_t> per_epoch;
      for (const EvalResult& eval : run.evals) {
        per_epoch.push_back(eval.confusion_at(static_cast<std::size_t>(a),
                                              static_cast<std::size_t>(b)) +
                            eval.confusion_at(static_cast<std::size_t>(b),
                                              static_cast<std::size_t>(a)));
      }
      output.counts[p].push_back(std::move(per_epoch));
    }
    output.runs.push_back(std::move(run));
  }

  const std::filesystem::path out(rc.out_dir);
  std::ofstream os = detail::open_artifact(out / "pairs.csv");
  os << "seed,epoch";
  for (const auto& [a, b] : rc.pairs) os << ",pair_" << a << "_" << b;
  os << "\n";
  for (std::size_t r = 0; r < output.runs.size(); ++r) {
    for (std::size_t e = 0; e < rc.epochs; ++e) {
      os << output.runs[r].seed << "," << e + 1;
      for (std::size_t p = 0; p < rc.pairs.size(); ++p) {
        os << "," << output.counts[p][r][e];
      }
      os << "\n";
    }
  }

  std::ofstream mean = detail::open_artifact(out / "pairs_mean.csv");
  mean << "epoch";
  for (const auto& [a, b] : rc.pairs) mean << ",pair_" << a << "_" << b;
  mean << "\n";
  const double inv = 1.0 / static_cast<double>(rc.seeds.size());
  for (std::size_t e = 0; e < rc.epochs; ++e) {
    mean << e + 1;
    for (std::size_t p = 0; p < rc.pairs.size(); ++p) {
      double total = 0.0;
      for (std::size_t r = 0; r < output.runs.size(); ++r) {
        total += static_cast<double>(output.counts[p][r][e]);
      }
      mean << "," << detail::csv_double(total * inv);
    }
    mean << "\n";
  }
  return output;
}

/// `dump-maps`: write the selected conv-block-1 output channel of requested
/// test samples, plus its pooled form under max / avg / regularized pooling,
/// as min-max normalized PGM images.
inline void cmd_dump_maps(const RunConfig& rc) {
  const DatasetBundle data = load_dataset(rc.dataset);
  LayerGraph graph = build_run_graph(rc, data, rc.pool1_kind, rc.seeds.front());
  if (!rc.dump_checkpoint.empty()) load_checkpoint(rc.dump_checkpoint, graph);

  const std::size_t pool_index = graph.first_pool_index();
  const std::filesystem::path out(rc.out_dir);
  const auto normalized = [](const Tensor& map) {
    double lo = map[0], hi = map[0];
    for (std::size_t i = 0; i < map.size(); ++i) {
      lo = std::min(lo, map[i]);
      hi = std::max(hi, map[i]);
    }
    Tensor img = Tensor::zeros(map.shape());
    if (hi > lo) {
      for (std::size_t i = 0; i < map.size(); ++i) img[i] = (map[i] - lo) / (hi - lo);
    }
    return img;
  };

  for (std::size_t id : rc.dump_samples) {
    if (id >= data.test.size()) {
      throw std::runtime_error("dump-maps: sample id " + std::to_string(id) +
                               " out of range (test set has " +
                               std::to_string(data.test.size()) + " samples)");
    }
    const std::size_t h = data.test.height(), w = data.test.width();
    Tensor batch = Tensor::zeros({1, 1, h, w});
    std::copy_n(data.test.images.data() + id * h * w, h * w, batch.data());
    Tensor features = graph.forward_prefix(pool_index, batch);
    if (rc.dump_channel >= features.extent(1)) {
      throw std::runtime_error("dump-maps: channel " + std::to_string(rc.dump_channel) +
                               " out of range (" + std::to_string(features.extent(1)) +
                               " channels)");
    }

    const std::size_t fh = features.extent(2), fw = features.extent(3);
    Tensor channel = Tensor::zeros({1, 1, fh, fw});
    std::copy_n(features.data() + rc.dump_channel * fh * fw, fh * fw, channel.data());
    Tensor plane = Tensor::from({fh, fw},
                                std::vector<double>(channel.data(), channel.data() + fh * fw));

    const std::string stem = "sample" + std::to_string(id) + "_ch" +
                             std::to_string(rc.dump_channel) + "_";
    std::filesystem::create_directories(out);
    write_pgm((out / (stem + "original.pgm")).string(), normalized(plane));

    const auto pooled_plane = [&](const Tensor& pooled) {
      const std::size_t ph = pooled.extent(2), pw = pooled.extent(3);
      return Tensor::from({ph, pw},
                          std::vector<double>(pooled.data(), pooled.data() + ph * pw));
    };
    write_pgm((out / (stem + "max.pgm")).string(),
              normalized(pooled_plane(max_pool_forward(channel, rc.pool1).values)));
    write_pgm((out / (stem + "avg.pgm")).string(),
              normalized(pooled_plane(avg_pool_forward(channel, rc.pool1))));
    write_pgm((out / (stem + "regularized.pgm")).string(),
              normalized(pooled_plane(regularized_pool_forward(channel, rc.pool1).values)));
  }
}

}  // namespace regpool
