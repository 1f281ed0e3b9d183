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

// Parameter checkpoint file, little-endian binary:
//   magic "RPCK" | u32 version (1) | u32 tensor count
//   per tensor: u32 rank | u32 extents[rank] | f64 values[volume]
// Tensors appear in graph order (per layer: weight, then bias).

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "regpool/nn.hpp"

namespace regpool {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace detail {

constexpr char kCheckpointMagic[4] = {'R', 'P', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

inline void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline std::uint32_t read_u32(std::istream& is, const char* what) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(v))) {
    throw std::runtime_error(std::string("checkpoint: truncated while reading ") + what);
  }
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, LayerGraph& graph) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  os.write(detail::kCheckpointMagic, 4);
  detail::write_u32(os, detail::kCheckpointVersion);
  const std::vector<Tensor*> params = graph.params();
  detail::write_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const Tensor* p : params) {
    detail::write_u32(os, static_cast<std::uint32_t>(p->rank()));
    for (std::size_t e : p->shape()) {
      detail::write_u32(os, static_cast<std::uint32_t>(e));
    }
    os.write(reinterpret_cast<const char*>(p->data()),
             static_cast<std::streamsize>(p->size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("checkpoint: write to '" + path + "' failed");
}

inline void load_checkpoint(const std::string& path, LayerGraph& graph) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  char magic[4] = {};
  if (!is.read(magic, 4) || std::memcmp(magic, detail::kCheckpointMagic, 4) != 0) {
    throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
  }
  const std::uint32_t version = detail::read_u32(is, "version");
  if (version != detail::kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  const std::uint32_t count = detail::read_u32(is, "tensor count");
  std::vector<Tensor*> params = graph.params();
  if (count != params.size()) {
    throw std::runtime_error("checkpoint: holds " + std::to_string(count) +
                             " tensors but the graph has " +
                             std::to_string(params.size()));
  }
  for (Tensor* p : params) {
    const std::uint32_t rank = detail::read_u32(is, "tensor rank");
    std::vector<std::size_t> shape(rank);
    for (std::uint32_t a = 0; a < rank; ++a) {
      shape[a] = detail::read_u32(is, "tensor extent");
    }
    if (shape != p->shape()) {
      throw std::runtime_error("checkpoint: tensor shape mismatch against the graph");
    }
    if (!is.read(reinterpret_cast<char*>(p->data()),
                 static_cast<std::streamsize>(p->size() * sizeof(double)))) {
      throw std::runtime_error("checkpoint: truncated tensor data in '" + path + "'");
    }
  }
}

}  // namespace regpool
