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

// Dataset ingestion: IDX (MNIST-family) containers, binary PGM/PPM images,
// directory-per-class image trees, bilinear resizing, and a deterministic
// stratified splitter. Pixels are always scaled into [0, 1].

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "regpool/rng.hpp"
#include "regpool/tensor.hpp"

namespace regpool {

struct LabeledDataset {
  Tensor images;  // (N, 1, H, W), values in [0, 1]
  std::vector<int> labels;
  std::size_t num_classes = 0;
  std::vector<std::string> class_names;

  std::size_t size() const { return labels.size(); }
  std::size_t height() const { return images.rank() == 4 ? images.extent(2) : 0; }
  std::size_t width() const { return images.rank() == 4 ? images.extent(3) : 0; }
};

/// New dataset holding the given sample indices, in the given order.
inline LabeledDataset select(const LabeledDataset& ds,
                             std::span<const std::size_t> indices) {
  const std::size_t h = ds.height(), w = ds.width();
  LabeledDataset out;
  out.images = Tensor::zeros({indices.size(), 1, h, w});
  out.labels.reserve(indices.size());
  out.num_classes = ds.num_classes;
  out.class_names = ds.class_names;
  const std::size_t plane = h * w;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    if (src >= ds.size()) {
      throw std::invalid_argument("select: sample index out of range");
    }
    std::copy_n(ds.images.data() + src * plane, plane,
                out.images.data() + i * plane);
    out.labels.push_back(ds.labels[src]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// IDX container (big-endian; magic 0x00000803 for images, 0x00000801 labels)
// ---------------------------------------------------------------------------

namespace detail {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(is),
                                    std::istreambuf_iterator<char>());
}

inline std::uint32_t read_u32_be(const std::vector<unsigned char>& bytes,
                                 std::size_t offset, const std::string& path,
                                 const char* what) {
  if (offset + 4 > bytes.size()) {
    throw std::runtime_error("IDX file '" + path + "' truncated while reading " + what);
  }
  return (static_cast<std::uint32_t>(bytes[offset]) << 24) |
         (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
         (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) |
         static_cast<std::uint32_t>(bytes[offset + 3]);
}

inline void append_u32_be(std::vector<unsigned char>& bytes, std::uint32_t v) {
  bytes.push_back(static_cast<unsigned char>(v >> 24));
  bytes.push_back(static_cast<unsigned char>(v >> 16));
  bytes.push_back(static_cast<unsigned char>(v >> 8));
  bytes.push_back(static_cast<unsigned char>(v));
}

}  // namespace detail

/// Parse an IDX image/label file pair. Pixel bytes are scaled to [0,1] by
/// /255; the image and label counts are cross-checked.
inline LabeledDataset load_idx(const std::string& images_path,
                               const std::string& labels_path) {
  const std::vector<unsigned char> ib = detail::read_file_bytes(images_path);
  const std::uint32_t imagic = detail::read_u32_be(ib, 0, images_path, "magic");
  if (imagic != detail::kIdxImagesMagic) {
    throw std::runtime_error("IDX file '" + images_path + "' has bad magic (expected 0x00000803)");
  }
  const std::uint32_t count = detail::read_u32_be(ib, 4, images_path, "image count");
  const std::uint32_t height = detail::read_u32_be(ib, 8, images_path, "image height");
  const std::uint32_t width = detail::read_u32_be(ib, 12, images_path, "image width");
  const std::size_t expected = 16 + static_cast<std::size_t>(count) * height * width;
  if (ib.size() < expected) {
    throw std::runtime_error("IDX file '" + images_path + "' truncated: expected " +
                             std::to_string(expected) + " bytes, got " +
                             std::to_string(ib.size()));
  }

  const std::vector<unsigned char> lb = detail::read_file_bytes(labels_path);
  const std::uint32_t lmagic = detail::read_u32_be(lb, 0, labels_path, "magic");
  if (lmagic != detail::kIdxLabelsMagic) {
    throw std::runtime_error("IDX file '" + labels_path + "' has bad magic (expected 0x00000801)");
  }
  const std::uint32_t label_count = detail::read_u32_be(lb, 4, labels_path, "label count");
  if (lb.size() < 8 + static_cast<std::size_t>(label_count)) {
    throw std::runtime_error("IDX file '" + labels_path + "' truncated: expected " +
                             std::to_string(8 + label_count) + " bytes, got " +
                             std::to_string(lb.size()));
  }
  if (label_count != count) {
    throw std::runtime_error("IDX count mismatch: " + std::to_string(count) +
                             " images in '" + images_path + "' vs " +
                             std::to_string(label_count) + " labels in '" +
                             labels_path + "'");
  }

  LabeledDataset ds;
  ds.images = Tensor::zeros({count, 1, height, width});
  for (std::size_t i = 0; i < static_cast<std::size_t>(count) * height * width; ++i) {
    ds.images[i] = static_cast<double>(ib[16 + i]) / 255.0;
  }
  ds.labels.reserve(count);
  int max_label = -1;
  for (std::uint32_t i = 0; i < count; ++i) {
    const int label = static_cast<int>(lb[8 + i]);
    ds.labels.push_back(label);
    max_label = std::max(max_label, label);
  }
  ds.num_classes = static_cast<std::size_t>(max_label + 1);
  for (std::size_t k = 0; k < ds.num_classes; ++k) {
    ds.class_names.push_back(std::to_string(k));
  }
  return ds;
}

/// Inverse of load_idx, for fixture generation. Values are quantized to
/// round(v * 255).
inline void save_idx(const LabeledDataset& ds, const std::string& images_path,
                     const std::string& labels_path) {
  std::vector<unsigned char> ib;
  detail::append_u32_be(ib, detail::kIdxImagesMagic);
  detail::append_u32_be(ib, static_cast<std::uint32_t>(ds.size()));
  detail::append_u32_be(ib, static_cast<std::uint32_t>(ds.height()));
  detail::append_u32_be(ib, static_cast<std::uint32_t>(ds.width()));
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    const double v = std::clamp(ds.images[i], 0.0, 1.0);
    ib.push_back(static_cast<unsigned char>(std::lround(v * 255.0)));
  }
  std::vector<unsigned char> lb;
  detail::append_u32_be(lb, detail::kIdxLabelsMagic);
  detail::append_u32_be(lb, static_cast<std::uint32_t>(ds.size()));
  for (int label : ds.labels) lb.push_back(static_cast<unsigned char>(label));

  std::ofstream os(images_path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + images_path + "' for writing");
  os.write(reinterpret_cast<const char*>(ib.data()), static_cast<std::streamsize>(ib.size()));
  std::ofstream ls(labels_path, std::ios::binary);
  if (!ls) throw std::runtime_error("cannot open '" + labels_path + "' for writing");
  ls.write(reinterpret_cast<const char*>(lb.data()), static_cast<std::streamsize>(lb.size()));
}

// ---------------------------------------------------------------------------
// PGM / PPM (binary P5 / P6)
// ---------------------------------------------------------------------------

namespace detail {

inline std::size_t pnm_token(const std::vector<unsigned char>& bytes,
                             std::size_t pos, const std::string& path,
                             std::size_t& value) {
  // skip whitespace and '#' comments
  while (pos < bytes.size()) {
    const unsigned char c = bytes[pos];
    if (c == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= bytes.size() || bytes[pos] < '0' || bytes[pos] > '9') {
    throw std::runtime_error("cannot decode '" + path + "': malformed PNM header");
  }
  value = 0;
  while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
    value = value * 10 + (bytes[pos] - '0');
    ++pos;
  }
  return pos;
}

}  // namespace detail

/// Read a binary PGM (P5) or PPM (P6) file into a rank-2 tensor with values
/// in [0,1]; color images are converted to gray by the unweighted RGB mean.
inline Tensor read_image(const std::string& path) {
  const std::vector<unsigned char> bytes = detail::read_file_bytes(path);
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw std::runtime_error("cannot decode '" + path + "': not a binary PGM/PPM file");
  }
  const bool color = bytes[1] == '6';
  std::size_t width = 0, height = 0, maxval = 0;
  std::size_t pos = 2;
  pos = detail::pnm_token(bytes, pos, path, width);
  pos = detail::pnm_token(bytes, pos, path, height);
  pos = detail::pnm_token(bytes, pos, path, maxval);
  if (maxval == 0 || maxval > 255) {
    throw std::runtime_error("cannot decode '" + path + "': unsupported maxval " +
                             std::to_string(maxval));
  }
  ++pos;  // single whitespace after maxval
  const std::size_t channels = color ? 3 : 1;
  if (pos + width * height * channels > bytes.size()) {
    throw std::runtime_error("cannot decode '" + path + "': truncated pixel data");
  }
  Tensor img = Tensor::zeros({height, width});
  // true division, not reciprocal multiplication: byte 51 must decode to
  // exactly the same double as 51.0 / 255.0 from the IDX loader
  const double denom = static_cast<double>(maxval);
  for (std::size_t i = 0; i < height * width; ++i) {
    if (color) {
      const double r = bytes[pos + 3 * i];
      const double g = bytes[pos + 3 * i + 1];
      const double b = bytes[pos + 3 * i + 2];
      img[i] = (r + g + b) / (3.0 * denom);
    } else {
      img[i] = static_cast<double>(bytes[pos + i]) / denom;
    }
  }
  return img;
}

/// Write a rank-2 tensor with values in [0,1] as binary PGM (maxval 255).
inline void write_pgm(const std::string& path, const Tensor& img) {
  if (img.rank() != 2) throw std::invalid_argument("write_pgm: expected a rank-2 image");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os << "P5\n" << img.extent(1) << " " << img.extent(0) << "\n255\n";
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = std::clamp(img[i], 0.0, 1.0);
    os.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
  }
  if (!os) throw std::runtime_error("write to '" + path + "' failed");
}

// ---------------------------------------------------------------------------
// Resizing
// ---------------------------------------------------------------------------

/// Bilinear resize with corner-aligned sampling: output corners map exactly
/// onto input corners, so resizing to the same dims is the identity.
inline Tensor resize_bilinear(const Tensor& img, std::size_t out_h,
                              std::size_t out_w) {
  if (img.rank() != 2) throw std::invalid_argument("resize_bilinear: expected a rank-2 image");
  if (out_h == 0 || out_w == 0) {
    throw std::invalid_argument("resize_bilinear: target dims must be positive");
  }
  const std::size_t in_h = img.extent(0), in_w = img.extent(1);
  const double scale_r = out_h > 1 ? static_cast<double>(in_h - 1) / static_cast<double>(out_h - 1) : 0.0;
  const double scale_c = out_w > 1 ? static_cast<double>(in_w - 1) / static_cast<double>(out_w - 1) : 0.0;
  Tensor out = Tensor::zeros({out_h, out_w});
  for (std::size_t r = 0; r < out_h; ++r) {
    const double sr = static_cast<double>(r) * scale_r;
    const std::size_t r0 = std::min(static_cast<std::size_t>(sr), in_h - 1);
    const std::size_t r1 = std::min(r0 + 1, in_h - 1);
    const double fr = sr - static_cast<double>(r0);
    for (std::size_t c = 0; c < out_w; ++c) {
      const double sc = static_cast<double>(c) * scale_c;
      const std::size_t c0 = std::min(static_cast<std::size_t>(sc), in_w - 1);
      const std::size_t c1 = std::min(c0 + 1, in_w - 1);
      const double fc = sc - static_cast<double>(c0);
      out(r, c) = (1.0 - fr) * ((1.0 - fc) * img(r0, c0) + fc * img(r0, c1)) +
                  fr * ((1.0 - fc) * img(r1, c0) + fc * img(r1, c1));
    }
  }
  return out;
}

inline LabeledDataset resize_dataset(const LabeledDataset& ds, std::size_t h,
                                     std::size_t w) {
  if (ds.height() == h && ds.width() == w) return ds;
  LabeledDataset out;
  out.images = Tensor::zeros({ds.size(), 1, h, w});
  out.labels = ds.labels;
  out.num_classes = ds.num_classes;
  out.class_names = ds.class_names;
  const std::size_t in_plane = ds.height() * ds.width();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    Tensor img = Tensor::from(
        {ds.height(), ds.width()},
        std::vector<double>(ds.images.data() + i * in_plane,
                            ds.images.data() + (i + 1) * in_plane));
    Tensor resized = resize_bilinear(img, h, w);
    std::copy_n(resized.data(), h * w, out.images.data() + i * h * w);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Directory-per-class loader
// ---------------------------------------------------------------------------

/// Load a directory tree with one subdirectory per class. Ordering is
/// lexicographic by class directory then filename, independent of filesystem
/// enumeration order. `extension_filter` (e.g. ".pgm") restricts files;
/// empty means any of .pgm/.ppm.
inline LabeledDataset load_image_dir(const std::string& root,
                                     const std::string& extension_filter = "") {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) {
    throw std::runtime_error("image directory '" + root + "' does not exist");
  }
  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) {
    throw std::runtime_error("empty dataset: no class directories under '" + root + "'");
  }

  std::vector<Tensor> images;
  LabeledDataset ds;
  std::size_t h = 0, w = 0;
  std::string first_file;
  for (std::size_t k = 0; k < class_dirs.size(); ++k) {
    ds.class_names.push_back(class_dirs[k].filename().string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(class_dirs[k])) {
      if (!entry.is_regular_file()) continue;
      const std::string ext = entry.path().extension().string();
      if (!extension_filter.empty() ? ext == extension_filter
                                    : (ext == ".pgm" || ext == ".ppm")) {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      Tensor img = read_image(file.string());
      if (images.empty()) {
        h = img.extent(0);
        w = img.extent(1);
        first_file = file.string();
      } else if (img.extent(0) != h || img.extent(1) != w) {
        throw std::runtime_error("image '" + file.string() + "' has dims " +
                                 std::to_string(img.extent(0)) + "x" +
                                 std::to_string(img.extent(1)) +
                                 " but '" + first_file + "' has " +
                                 std::to_string(h) + "x" + std::to_string(w));
      }
      images.push_back(std::move(img));
      ds.labels.push_back(static_cast<int>(k));
    }
  }
  if (images.empty()) {
    throw std::runtime_error("empty dataset: no decodable images under '" + root + "'");
  }
  ds.num_classes = class_dirs.size();
  ds.images = Tensor::zeros({images.size(), 1, h, w});
  for (std::size_t i = 0; i < images.size(); ++i) {
    std::copy_n(images[i].data(), h * w, ds.images.data() + i * h * w);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

/// Stratified train/test split: per class, a seed-deterministic shuffle picks
/// round(fraction * count) training samples; the rest are test. Both halves
/// keep the original dataset order.
inline std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds,
                                                       double train_fraction,
                                                       std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("split: train fraction must be in (0, 1)");
  }
  std::vector<std::vector<std::size_t>> per_class(ds.num_classes);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    per_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  }
  Rng rng(seed);
  std::vector<std::size_t> train_idx, test_idx;
  for (auto& indices : per_class) {
    rng.shuffle(indices);
    const std::size_t take = static_cast<std::size_t>(
        std::floor(train_fraction * static_cast<double>(indices.size()) + 0.5));
    for (std::size_t i = 0; i < indices.size(); ++i) {
      (i < take ? train_idx : test_idx).push_back(indices[i]);
    }
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  return {select(ds, train_idx), select(ds, test_idx)};
}

}  // namespace regpool
