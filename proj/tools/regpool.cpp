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

// Experiment driver CLI. All behavior is configured through `key = value`
// config files; --set/--out/--seeds are command-line overrides. Every run is
// reproducible byte-for-byte from (config, seeds).

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "regpool/experiment.hpp"

namespace {

struct CommonArgs {
  std::string config;
  std::string out;
  std::string seeds;
  std::vector<std::string> sets;
};

void add_common_options(CLI::App* sub, CommonArgs& args) {
  sub->add_option("--config", args.config, "run config file (key = value lines, # comments)")
      ->check(CLI::ExistingFile);
  sub->add_option("--out", args.out, "output directory (overrides config key 'out')");
  sub->add_option("--seeds", args.seeds, "comma-separated seeds (overrides config key 'seeds')");
  sub->add_option("--set", args.sets, "override any config key, e.g. --set pool.w=5");
}

regpool::RunConfig build_run_config(const CommonArgs& args,
                                    const std::vector<std::pair<std::string, std::string>>& extra) {
  regpool::KeyValueConfig cfg =
      args.config.empty() ? regpool::KeyValueConfig::parse_string("", "<defaults>")
                          : regpool::KeyValueConfig::parse_file(args.config);
  for (const std::string& kv : args.sets) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw std::runtime_error("--set expects key=value, got '" + kv + "'");
    }
    cfg.set(regpool::KeyValueConfig::trim(kv.substr(0, eq)),
            regpool::KeyValueConfig::trim(kv.substr(eq + 1)));
  }
  if (!args.out.empty()) cfg.set("out", args.out);
  if (!args.seeds.empty()) cfg.set("seeds", args.seeds);
  for (const auto& [key, value] : extra) {
    if (!value.empty()) cfg.set(key, value);
  }
  return regpool::RunConfig::from_config(cfg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"regularized-pooling experiment driver"};
  app.require_subcommand(1);

  CommonArgs train_args, compare_args, sweep_args, pairs_args, dump_args;
  std::string compare_kinds, pairs_list, dump_checkpoint, dump_samples, dump_channel;

  CLI::App* train = app.add_subcommand("train", "multi-seed training run with metrics CSVs");
  add_common_options(train, train_args);

  CLI::App* compare = app.add_subcommand(
      "compare", "train each pooling kind under identical seeds and data");
  add_common_options(compare, compare_args);
  compare->add_option("--kinds", compare_kinds,
                      "pooling kinds, e.g. max,avg,regularized (overrides 'compare.kinds')");

  CLI::App* sweep = app.add_subcommand("sweep", "Cartesian grid over pool.n / pool.w / pool.s");
  add_common_options(sweep, sweep_args);

  CLI::App* pairs = app.add_subcommand(
      "pairs", "per-epoch misrecognition counts for tracked class pairs");
  add_common_options(pairs, pairs_args);
  pairs->add_option("--pairs", pairs_list, "class pairs, e.g. 7:9,2:7 (overrides 'pairs')");

  CLI::App* dump = app.add_subcommand(
      "dump-maps", "write conv-block-1 feature maps and their pooled forms as PGM");
  add_common_options(dump, dump_args);
  dump->add_option("--checkpoint", dump_checkpoint, "parameter checkpoint to load");
  dump->add_option("--samples", dump_samples, "test sample ids, e.g. 0,1,2");
  dump->add_option("--channel", dump_channel, "conv-block-1 output channel to dump");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      regpool::cmd_train(build_run_config(train_args, {}));
    } else if (compare->parsed()) {
      regpool::cmd_compare(build_run_config(compare_args, {{"compare.kinds", compare_kinds}}));
    } else if (sweep->parsed()) {
      regpool::cmd_sweep(build_run_config(sweep_args, {}));
    } else if (pairs->parsed()) {
      regpool::cmd_pairs(build_run_config(pairs_args, {{"pairs", pairs_list}}));
    } else if (dump->parsed()) {
      regpool::cmd_dump_maps(build_run_config(dump_args, {{"dump.checkpoint", dump_checkpoint},
                                                          {"dump.samples", dump_samples},
                                                          {"dump.channel", dump_channel}}));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
