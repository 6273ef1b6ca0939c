/* Copyright 2026 The tbrisk Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tbrisk/dataset.hpp"
#include "tbrisk/errors.hpp"
#include "tbrisk/io_util.hpp"
#include "tbrisk/matrix.hpp"
#include "tbrisk/network.hpp"
#include "tbrisk/rng.hpp"

namespace tbrisk {

// Similarity scores are only meaningful when every model answers the same
// inputs in the same order, so the probe set is pinned once and shared.
struct ProbeSet {
  std::string id;
  Matrix inputs;
  std::uint64_t seed = 0;
};

// Minimum probe count for stable similarity estimates.
inline constexpr std::size_t kMinProbeSize = 50;

// Draws `size` rows from the dataset's test split (never train: similarity
// should reflect generalization-time behavior). Deterministic for a seed;
// row order is fixed by the seeded shuffle.
inline ProbeSet make_probe_set(const Dataset& data, std::size_t size, std::uint64_t seed,
                               std::string id = "") {
  if (size < kMinProbeSize) {
    throw ConfigError("probe set size " + std::to_string(size) + " below minimum " +
                      std::to_string(kMinProbeSize));
  }
  std::vector<std::size_t> test_idx = data.indices_of(Split::kTest);
  if (test_idx.size() < size) {
    throw InsufficientDataError("test split has " + std::to_string(test_idx.size()) +
                                " examples, probe set needs " + std::to_string(size));
  }
  RngStream rng(seed);
  rng.shuffle(test_idx);
  test_idx.resize(size);
  if (id.empty()) {
    id = to_string(data.kind) + "-p" + std::to_string(size) + "-s" + std::to_string(seed);
  }
  return ProbeSet{std::move(id), data.rows_at(test_idx), seed};
}

// One captured layer: rows follow probe order, features are the layer's
// flattened outputs (conv layers flatten (channel, height, width) row-major).
struct ActivationMatrix {
  std::string model_id;
  std::size_t layer_index = 0;
  std::string probe_set_id;
  Matrix data{1, 1};

  void validate() const {
    if (model_id.empty()) throw ConfigError("activation matrix needs a model id");
    if (probe_set_id.empty()) throw ConfigError("activation matrix needs a probe-set id");
    if (data.rows() < 2)
      throw DegenerateInputError("activation matrix needs at least 2 probe rows");
    data.check_finite();
  }
};

// Runs the probes through the model and keeps every post-ReLU layer plus the
// final logits, in increasing layer order.
inline std::vector<ActivationMatrix> capture(const TrainedModel& model,
                                             const ProbeSet& probes) {
  const ForwardTrace trace = forward(model, probes.inputs);
  std::vector<ActivationMatrix> out;
  for (std::size_t li : capturable_layers(model.descriptor)) {
    ActivationMatrix m{model.descriptor.id, li, probes.id, trace.outputs[li]};
    m.validate();
    out.push_back(std::move(m));
  }
  return out;
}

// Activation container, extension .amat.
//
// Byte layout (all integers little-endian):
//   magic      4 bytes  "AMAT"
//   version    u8       0x01
//   dtype      u8       0x01 (little-endian 32-bit IEEE-754)
//   rows       u32
//   cols       u32
//   model id   u32 length + UTF-8
//   layer idx  u32
//   probe id   u32 length + UTF-8
//   payload    rows x cols f32, row-major
//
// Data passes through one f32 quantization on save; save/load/save is
// byte-stable.

namespace detail {
inline constexpr char kAmatMagic[4] = {'A', 'M', 'A', 'T'};
inline constexpr std::uint8_t kAmatVersion = 0x01;
inline constexpr std::uint8_t kAmatDtypeF32LE = 0x01;
}  // namespace detail

inline void save_amat(const ActivationMatrix& m, const std::string& path) {
  m.validate();
  io::Writer w;
  w.raw(detail::kAmatMagic, 4);
  w.u8(detail::kAmatVersion);
  w.u8(detail::kAmatDtypeF32LE);
  w.u32(static_cast<std::uint32_t>(m.data.rows()));
  w.u32(static_cast<std::uint32_t>(m.data.cols()));
  w.str32(m.model_id);
  w.u32(static_cast<std::uint32_t>(m.layer_index));
  w.str32(m.probe_set_id);
  for (double v : m.data.data()) w.f32(static_cast<float>(v));
  io::write_file(path, w.bytes);
}

inline ActivationMatrix load_amat(const std::string& path) {
  const std::vector<std::uint8_t> bytes = io::read_file(path);
  io::Reader r{bytes.data(), bytes.size()};
  r.expect_magic(detail::kAmatMagic, "AMAT");
  const std::uint8_t version = r.u8("version");
  if (version != detail::kAmatVersion)
    throw FormatError("unsupported AMAT version " + std::to_string(version) + " at offset 4");
  const std::uint8_t dtype = r.u8("dtype");
  if (dtype != detail::kAmatDtypeF32LE)
    throw FormatError("unsupported AMAT dtype " + std::to_string(dtype) + " at offset 5");
  const std::uint32_t rows = r.u32("rows");
  const std::uint32_t cols = r.u32("cols");
  if (rows == 0 || cols == 0)
    throw FormatError("zero dimension in header at offset 6");
  ActivationMatrix m;
  m.model_id = r.str32("model id");
  m.layer_index = r.u32("layer index");
  m.probe_set_id = r.str32("probe-set id");

  const std::size_t payload = static_cast<std::size_t>(rows) * cols;
  if ((r.size - r.pos) / 4 < payload) {
    throw FormatError("dimension overflow: header claims " + std::to_string(payload) +
                      " values but only " + std::to_string(r.size - r.pos) +
                      " bytes remain at offset " + std::to_string(r.pos));
  }
  Matrix data(rows, cols);
  for (std::size_t k = 0; k < payload; ++k)
    data.mutable_data()[k] = static_cast<double>(r.f32("payload"));
  if (r.pos != r.size)
    throw FormatError("trailing bytes at offset " + std::to_string(r.pos) + " in " + path);
  m.data = std::move(data);
  m.validate();
  return m;
}

// Interop path: headerless comma-separated decimals, one probe per line.
// Metadata comes from the caller because the file carries none.
inline ActivationMatrix load_activation_csv(const std::string& path,
                                            const std::string& model_id,
                                            std::size_t layer_index,
                                            const std::string& probe_set_id) {
  const std::vector<std::uint8_t> bytes = io::read_file(path);
  const std::string text(bytes.begin(), bytes.end());

  std::vector<double> values;
  std::size_t cols = 0, rows = 0;
  std::size_t line_start = 0;
  for (std::size_t pos = 0; pos <= text.size(); ++pos) {
    if (pos != text.size() && text[pos] != '\n') continue;
    std::string line = text.substr(line_start, pos - line_start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    line_start = pos + 1;
    if (line.empty()) continue;

    std::size_t field_count = 0;
    std::size_t fs = 0;
    for (std::size_t p = 0; p <= line.size(); ++p) {
      if (p != line.size() && line[p] != ',') continue;
      const std::string field = line.substr(fs, p - fs);
      values.push_back(io::parse_double(field, "csv row " + std::to_string(rows + 1)));
      ++field_count;
      fs = p + 1;
    }
    if (cols == 0) {
      cols = field_count;
    } else if (field_count != cols) {
      throw FormatError("csv row " + std::to_string(rows + 1) + " has " +
                        std::to_string(field_count) + " fields, expected " +
                        std::to_string(cols));
    }
    ++rows;
  }
  if (rows == 0 || cols == 0) throw FormatError("csv file is empty: " + path);

  ActivationMatrix m{model_id, layer_index, probe_set_id, Matrix(rows, cols, std::move(values))};
  m.validate();
  return m;
}

}  // namespace tbrisk
