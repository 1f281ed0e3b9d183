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

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "regpool/data.hpp"
#include "regpool/rng.hpp"
#include "regpool/synthdata.hpp"
#include "regpool/tensor.hpp"

namespace fs = std::filesystem;
using regpool::LabeledDataset;
using regpool::Tensor;

namespace {

// Scratch directory that cleans up after each test case.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("regpool_data_" + tag)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream os(path, std::ios::binary);
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
}

void be32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

// Two 2x2 images with all distinct pixel bytes, labels 1 and 0.
struct GoldenIdx {
  std::vector<unsigned char> images;
  std::vector<unsigned char> labels;
  GoldenIdx() {
    be32(images, 0x00000803);
    be32(images, 2);  // count
    be32(images, 2);  // rows
    be32(images, 2);  // cols
    for (unsigned char b : {0, 51, 102, 255, 10, 20, 30, 40}) images.push_back(b);
    be32(labels, 0x00000801);
    be32(labels, 2);
    labels.push_back(1);
    labels.push_back(0);
  }
};

}  // namespace

// ---------------------------------------------------------------------------
// IDX
// ---------------------------------------------------------------------------

TEST_CASE("hand-assembled idx bytes decode to exact pixel values") {
  TempDir dir("idx_golden");
  GoldenIdx golden;
  write_bytes(dir.file("imgs"), golden.images);
  write_bytes(dir.file("lbls"), golden.labels);

  LabeledDataset ds = regpool::load_idx(dir.file("imgs"), dir.file("lbls"));
  REQUIRE(ds.size() == 2);
  REQUIRE(ds.height() == 2);
  REQUIRE(ds.width() == 2);
  REQUIRE(ds.labels == std::vector<int>{1, 0});
  REQUIRE(ds.num_classes == 2);
  REQUIRE(ds.class_names == std::vector<std::string>{"0", "1"});

  REQUIRE(ds.images(0, 0, 0, 0) == 0.0);
  REQUIRE(ds.images(0, 0, 0, 1) == 51.0 / 255.0);
  REQUIRE(ds.images(0, 0, 1, 0) == 102.0 / 255.0);
  REQUIRE(ds.images(0, 0, 1, 1) == 1.0);  // byte 255 maps to exactly 1
  REQUIRE(ds.images(1, 0, 0, 0) == 10.0 / 255.0);
  REQUIRE(ds.images(1, 0, 1, 1) == 40.0 / 255.0);
}

TEST_CASE("idx loader reports corrupt magics, counts, and truncation") {
  TempDir dir("idx_bad");
  GoldenIdx golden;

  std::vector<unsigned char> bad_magic = golden.images;
  bad_magic[3] = 0x99;
  write_bytes(dir.file("bad_magic"), bad_magic);
  write_bytes(dir.file("lbls"), golden.labels);
  REQUIRE_THROWS_WITH(regpool::load_idx(dir.file("bad_magic"), dir.file("lbls")),
                      Catch::Matchers::ContainsSubstring("bad magic"));

  std::vector<unsigned char> short_labels = golden.labels;
  short_labels[7] = 3;  // claims 3 labels, ships 2
  write_bytes(dir.file("imgs"), golden.images);
  write_bytes(dir.file("short_lbls"), short_labels);
  REQUIRE_THROWS_WITH(regpool::load_idx(dir.file("imgs"), dir.file("short_lbls")),
                      Catch::Matchers::ContainsSubstring("truncated"));

  std::vector<unsigned char> one_label = golden.labels;
  one_label[7] = 1;
  one_label.pop_back();
  write_bytes(dir.file("one_lbl"), one_label);
  REQUIRE_THROWS_WITH(regpool::load_idx(dir.file("imgs"), dir.file("one_lbl")),
                      Catch::Matchers::ContainsSubstring("count mismatch"));

  std::vector<unsigned char> cut = golden.images;
  cut.resize(cut.size() - 3);
  write_bytes(dir.file("cut"), cut);
  REQUIRE_THROWS_WITH(regpool::load_idx(dir.file("cut"), dir.file("lbls")),
                      Catch::Matchers::ContainsSubstring("truncated"));

  REQUIRE_THROWS_WITH(regpool::load_idx(dir.file("absent"), dir.file("lbls")),
                      Catch::Matchers::ContainsSubstring("cannot open"));
}

TEST_CASE("idx save/load round-trips byte-quantized pixels exactly") {
  TempDir dir("idx_rt");
  regpool::SynthDigitsOptions opt;
  opt.samples_per_class = 3;
  opt.height = 9;
  opt.width = 9;
  opt.seed = 5;
  LabeledDataset original = regpool::make_synth_digits(opt);
  // snap to the representable 1/255 grid first, as any byte format must
  for (std::size_t i = 0; i < original.images.size(); ++i) {
    original.images[i] =
        std::lround(original.images[i] * 255.0) / 255.0;
  }

  regpool::save_idx(original, dir.file("imgs"), dir.file("lbls"));
  LabeledDataset reloaded = regpool::load_idx(dir.file("imgs"), dir.file("lbls"));
  REQUIRE(reloaded.size() == original.size());
  REQUIRE(reloaded.labels == original.labels);
  for (std::size_t i = 0; i < original.images.size(); ++i) {
    REQUIRE(reloaded.images[i] == original.images[i]);
  }
}

// ---------------------------------------------------------------------------
// PGM / PPM
// ---------------------------------------------------------------------------

TEST_CASE("pgm files round-trip through write and read") {
  TempDir dir("pgm_rt");
  Tensor img = Tensor::from({2, 3}, {0.0, 0.2, 0.4, 0.6, 0.8, 1.0});
  regpool::write_pgm(dir.file("img.pgm"), img);
  Tensor back = regpool::read_image(dir.file("img.pgm"));
  REQUIRE(back.extent(0) == 2);
  REQUIRE(back.extent(1) == 3);
  for (std::size_t i = 0; i < img.size(); ++i) {
    REQUIRE(back[i] == std::lround(img[i] * 255.0) / 255.0);
  }
}

TEST_CASE("pnm headers tolerate comments and odd whitespace") {
  TempDir dir("pgm_hdr");
  std::string text = "P5 # format\n# a comment line\n  2\t1 # dims\n255\n";
  std::vector<unsigned char> bytes(text.begin(), text.end());
  bytes.push_back(255);
  bytes.push_back(0);
  write_bytes(dir.file("c.pgm"), bytes);
  Tensor img = regpool::read_image(dir.file("c.pgm"));
  REQUIRE(img.extent(0) == 1);
  REQUIRE(img.extent(1) == 2);
  REQUIRE(img(0, 0) == 1.0);
  REQUIRE(img(0, 1) == 0.0);
}

TEST_CASE("ppm images decode to the channel mean") {
  TempDir dir("ppm");
  std::string header = "P6\n1 1\n255\n";
  std::vector<unsigned char> bytes(header.begin(), header.end());
  bytes.push_back(30);
  bytes.push_back(60);
  bytes.push_back(90);
  write_bytes(dir.file("c.ppm"), bytes);
  Tensor img = regpool::read_image(dir.file("c.ppm"));
  REQUIRE(img(0, 0) == (30.0 + 60.0 + 90.0) / (3.0 * 255.0));
}

TEST_CASE("image reader rejects bad formats and deep maxvals") {
  TempDir dir("pnm_bad");
  std::string p7 = "P7\n1 1\n255\nx";
  write_bytes(dir.file("bad.pgm"), {p7.begin(), p7.end()});
  REQUIRE_THROWS_WITH(regpool::read_image(dir.file("bad.pgm")),
                      Catch::Matchers::ContainsSubstring("not a binary PGM/PPM"));

  std::string deep = "P5\n1 1\n65535\n\0\0";
  std::vector<unsigned char> deep_bytes(deep.begin(), deep.end());
  write_bytes(dir.file("deep.pgm"), deep_bytes);
  REQUIRE_THROWS_WITH(regpool::read_image(dir.file("deep.pgm")),
                      Catch::Matchers::ContainsSubstring("maxval"));

  REQUIRE_THROWS_AS(regpool::read_image(dir.file("missing.pgm")),
                    std::runtime_error);
}

TEST_CASE("write_pgm requires a rank-2 tensor") {
  TempDir dir("pgm_rank");
  REQUIRE_THROWS_AS(regpool::write_pgm(dir.file("x.pgm"), Tensor::zeros({2, 2, 2})),
                    std::invalid_argument);
}

// ---------------------------------------------------------------------------
// resizing
// ---------------------------------------------------------------------------

TEST_CASE("resizing to the same dimensions is the identity") {
  regpool::Rng rng(211);
  Tensor img = Tensor::zeros({7, 5});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = rng.unit();
  Tensor out = regpool::resize_bilinear(img, 7, 5);
  for (std::size_t i = 0; i < img.size(); ++i) REQUIRE(out[i] == img[i]);
}

TEST_CASE("resizing preserves constants and interpolates ramps") {
  Tensor flat = Tensor::from({2, 2}, {0.5, 0.5, 0.5, 0.5});
  Tensor grown = regpool::resize_bilinear(flat, 6, 6);
  for (std::size_t i = 0; i < grown.size(); ++i) REQUIRE(grown[i] == 0.5);

  // corner-aligned upsampling of a vertical ramp hits thirds
  Tensor ramp = Tensor::from({2, 2}, {0.0, 0.0, 1.0, 1.0});
  Tensor up = regpool::resize_bilinear(ramp, 4, 4);
  for (std::size_t c = 0; c < 4; ++c) {
    REQUIRE_THAT(up(0, c), Catch::Matchers::WithinAbs(0.0, 1e-15));
    REQUIRE_THAT(up(1, c), Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-15));
    REQUIRE_THAT(up(2, c), Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-15));
    REQUIRE_THAT(up(3, c), Catch::Matchers::WithinAbs(1.0, 1e-15));
  }
}

TEST_CASE("dataset resizing rescales every image") {
  regpool::SynthDigitsOptions opt;
  opt.samples_per_class = 1;
  opt.height = 14;
  opt.width = 14;
  LabeledDataset small = regpool::make_synth_digits(opt);
  LabeledDataset big = regpool::resize_dataset(small, 21, 21);
  REQUIRE(big.size() == small.size());
  REQUIRE(big.height() == 21);
  REQUIRE(big.width() == 21);
  REQUIRE(big.labels == small.labels);
}

// ---------------------------------------------------------------------------
// image directory loading
// ---------------------------------------------------------------------------

namespace {

void write_class_tree(const TempDir& dir) {
  int shade = 0;
  for (const std::string& cls : {"cats", "dogs", "owls"}) {
    fs::create_directories(dir.path / cls);
    for (int i = 0; i < 2; ++i) {
      Tensor img = Tensor::from(
          {2, 2}, std::vector<double>(4, (shade + i * 8) / 255.0));
      regpool::write_pgm((dir.path / cls / (std::to_string(i) + ".pgm")).string(),
                         img);
    }
    shade += 64;
  }
}

}  // namespace

TEST_CASE("class directories load with lexicographic labels") {
  TempDir dir("imgdir");
  write_class_tree(dir);
  LabeledDataset ds = regpool::load_image_dir(dir.path.string());
  REQUIRE(ds.size() == 6);
  REQUIRE(ds.num_classes == 3);
  REQUIRE(ds.class_names == std::vector<std::string>{"cats", "dogs", "owls"});
  REQUIRE(ds.labels == std::vector<int>{0, 0, 1, 1, 2, 2});
  REQUIRE(ds.images(0, 0, 0, 0) == 0.0);
  REQUIRE(ds.images(2, 0, 0, 0) == 64.0 / 255.0);
  REQUIRE(ds.images(4, 0, 0, 0) == 128.0 / 255.0);
}

TEST_CASE("directory loader surfaces structural problems") {
  TempDir dir("imgdir_bad");
  REQUIRE_THROWS_WITH(regpool::load_image_dir((dir.path / "nope").string()),
                      Catch::Matchers::ContainsSubstring("does not exist"));

  REQUIRE_THROWS_WITH(regpool::load_image_dir(dir.path.string()),
                      Catch::Matchers::ContainsSubstring("no class directories"));

  write_class_tree(dir);
  regpool::write_pgm((dir.path / "cats" / "big.pgm").string(),
                     Tensor::zeros({3, 3}));
  REQUIRE_THROWS_WITH(regpool::load_image_dir(dir.path.string()),
                      Catch::Matchers::ContainsSubstring("has dims"));
}

TEST_CASE("extension filters narrow the accepted files") {
  TempDir dir("imgdir_ext");
  write_class_tree(dir);
  std::ofstream((dir.path / "cats" / "notes.txt").string()) << "ignore me";
  LabeledDataset ds = regpool::load_image_dir(dir.path.string());
  REQUIRE(ds.size() == 6);  // default filter skips the .txt file

  REQUIRE_THROWS_WITH(regpool::load_image_dir(dir.path.string(), ".ppm"),
                      Catch::Matchers::ContainsSubstring("no decodable images"));
}

// ---------------------------------------------------------------------------
// select / split
// ---------------------------------------------------------------------------

TEST_CASE("select copies the requested samples in order") {
  GoldenIdx golden;
  TempDir dir("select");
  write_bytes(dir.file("imgs"), golden.images);
  write_bytes(dir.file("lbls"), golden.labels);
  LabeledDataset ds = regpool::load_idx(dir.file("imgs"), dir.file("lbls"));

  const std::vector<std::size_t> order{1, 0, 1};
  LabeledDataset out = regpool::select(ds, order);
  REQUIRE(out.size() == 3);
  REQUIRE(out.labels == std::vector<int>{0, 1, 0});
  REQUIRE(out.images(0, 0, 0, 0) == ds.images(1, 0, 0, 0));
  REQUIRE(out.images(1, 0, 1, 1) == ds.images(0, 0, 1, 1));

  const std::vector<std::size_t> bad{2};
  REQUIRE_THROWS_AS(regpool::select(ds, bad), std::invalid_argument);
}

TEST_CASE("splitting is stratified, disjoint, and seed-stable") {
  regpool::SynthDigitsOptions opt;
  opt.samples_per_class = 10;
  opt.height = 8;
  opt.width = 8;
  LabeledDataset ds = regpool::make_synth_digits(opt);

  auto [train, test] = regpool::split(ds, 0.5, 42);
  REQUIRE(train.size() == 50);
  REQUIRE(test.size() == 50);
  std::vector<int> train_counts(10, 0), test_counts(10, 0);
  for (int label : train.labels) ++train_counts[static_cast<std::size_t>(label)];
  for (int label : test.labels) ++test_counts[static_cast<std::size_t>(label)];
  for (int k = 0; k < 10; ++k) {
    REQUIRE(train_counts[static_cast<std::size_t>(k)] == 5);
    REQUIRE(test_counts[static_cast<std::size_t>(k)] == 5);
  }

  // the two halves partition the samples: fingerprint by image content
  auto fingerprint = [](const LabeledDataset& d, std::size_t i) {
    double acc = 0.0;
    const std::size_t plane = d.height() * d.width();
    for (std::size_t p = 0; p < plane; ++p) {
      acc += d.images[i * plane + p] * static_cast<double>(p + 1);
    }
    return acc;
  };
  std::multiset<double> all, halves;
  for (std::size_t i = 0; i < ds.size(); ++i) all.insert(fingerprint(ds, i));
  for (std::size_t i = 0; i < train.size(); ++i) halves.insert(fingerprint(train, i));
  for (std::size_t i = 0; i < test.size(); ++i) halves.insert(fingerprint(test, i));
  REQUIRE(all == halves);

  auto [train2, test2] = regpool::split(ds, 0.5, 42);
  REQUIRE(train2.labels == train.labels);
  for (std::size_t i = 0; i < train.images.size(); ++i) {
    REQUIRE(train2.images[i] == train.images[i]);
  }

  auto [train3, test3] = regpool::split(ds, 0.5, 43);
  bool any_difference = train3.labels != train.labels;
  for (std::size_t i = 0; !any_difference && i < train.images.size(); ++i) {
    any_difference = train3.images[i] != train.images[i];
  }
  REQUIRE(any_difference);

  REQUIRE_THROWS_AS(regpool::split(ds, 0.0, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(regpool::split(ds, 1.0, 1), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// synthetic digits
// ---------------------------------------------------------------------------

TEST_CASE("synthetic digits are balanced, bounded, and seed-deterministic") {
  regpool::SynthDigitsOptions opt;
  opt.samples_per_class = 4;
  opt.height = 16;
  opt.width = 16;
  opt.seed = 9;
  LabeledDataset a = regpool::make_synth_digits(opt);
  REQUIRE(a.size() == 40);
  REQUIRE(a.num_classes == 10);
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a.labels[i] == static_cast<int>(i / 4));
  }
  double lo = 1e9, hi = -1e9, mass = 0.0;
  for (std::size_t i = 0; i < a.images.size(); ++i) {
    lo = std::min(lo, a.images[i]);
    hi = std::max(hi, a.images[i]);
    mass += a.images[i];
  }
  REQUIRE(lo >= 0.0);
  REQUIRE(hi <= 1.0);
  REQUIRE(mass > 0.0);  // strokes actually rendered

  LabeledDataset b = regpool::make_synth_digits(opt);
  for (std::size_t i = 0; i < a.images.size(); ++i) {
    REQUIRE(b.images[i] == a.images[i]);
  }

  opt.seed = 10;
  LabeledDataset c = regpool::make_synth_digits(opt);
  bool differs = false;
  for (std::size_t i = 0; !differs && i < a.images.size(); ++i) {
    differs = c.images[i] != a.images[i];
  }
  REQUIRE(differs);
}
