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

// Writes the built-in synthetic deformed-digits dataset to disk, either as
// an IDX image/label pair or as a directory-per-class PGM tree. Handy for
// exercising the idx / image-dir dataset paths without external downloads.

#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "regpool/synthdata.hpp"

int main(int argc, char** argv) {
  CLI::App app{"synthetic deformed-digits dataset generator"};

  std::string out_dir = "digits";
  std::string format = "idx";
  regpool::SynthDigitsOptions opt;

  app.add_option("--out", out_dir, "output directory");
  app.add_option("--format", format, "idx (image/label pair) or pgm (class tree)")
      ->check(CLI::IsMember({"idx", "pgm"}));
  app.add_option("--per-class", opt.samples_per_class, "samples per digit class");
  app.add_option("--seed", opt.seed, "generation seed");
  app.add_option("--deform", opt.deform, "deformation strength (0 = clean glyphs)");

  CLI11_PARSE(app, argc, argv);

  try {
    const regpool::LabeledDataset ds = regpool::make_synth_digits(opt);
    std::filesystem::create_directories(out_dir);
    if (format == "idx") {
      regpool::save_idx(ds, out_dir + "/digits-images.idx", out_dir + "/digits-labels.idx");
    } else {
      const std::size_t plane = ds.height() * ds.width();
      for (std::size_t i = 0; i < ds.size(); ++i) {
        const std::string class_dir = out_dir + "/" + ds.class_names[static_cast<std::size_t>(ds.labels[i])];
        std::filesystem::create_directories(class_dir);
        regpool::Tensor img = regpool::Tensor::from(
            {ds.height(), ds.width()},
            std::vector<double>(ds.images.data() + i * plane,
                                ds.images.data() + (i + 1) * plane));
        char name[32];
        std::snprintf(name, sizeof(name), "%05zu.pgm", i);
        regpool::write_pgm(class_dir + "/" + name, img);
      }
    }
    std::cout << "wrote " << ds.size() << " samples to " << out_dir << std::endl;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
