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
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tbrisk/errors.hpp"
#include "tbrisk/io_util.hpp"
#include "tbrisk/network.hpp"

namespace tbrisk {

// Trained model container, extension .trmz.
//
// Byte layout (all integers little-endian):
//   magic        4 bytes  "TRMZ"
//   version      u8       0x01
//   card         u32 length + UTF-8 text (key=value lines, see below)
//   tensor count u32
//   per tensor:  u8 ndims, ndims x u32 dims, prod(dims) x f32 values
//
// The card records the architecture and training metadata, so a file is
// self-describing. Tensors appear in layer order, weights before bias;
// relu/flatten layers contribute none. Weights are quantized to f32 on
// save; loading widens back to double, so save/load/save is byte-stable.

namespace detail {

inline constexpr char kTrmzMagic[4] = {'T', 'R', 'M', 'Z'};
inline constexpr std::uint8_t kTrmzVersion = 0x01;

inline std::string layers_to_text(const std::vector<LayerSpec>& layers) {
  std::string out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (i) out += ',';
    switch (layers[i].kind) {
      case LayerKind::kDense:
        out += "dense:" + std::to_string(layers[i].units);
        break;
      case LayerKind::kConv2d:
        out += "conv:" + std::to_string(layers[i].out_channels) + ':' +
               std::to_string(layers[i].kernel);
        break;
      case LayerKind::kRelu:
        out += "relu";
        break;
      case LayerKind::kFlatten:
        out += "flatten";
        break;
    }
  }
  return out;
}

inline std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(cur);
  return parts;
}

inline std::vector<LayerSpec> layers_from_text(const std::string& text) {
  std::vector<LayerSpec> layers;
  for (const std::string& tok : split_on(text, ',')) {
    const std::vector<std::string> f = split_on(tok, ':');
    if (f[0] == "dense" && f.size() == 2) {
      layers.push_back(LayerSpec::dense(io::parse_u64(f[1], "dense units")));
    } else if (f[0] == "conv" && f.size() == 3) {
      layers.push_back(LayerSpec::conv2d(io::parse_u64(f[1], "conv channels"),
                                         io::parse_u64(f[2], "conv kernel")));
    } else if (f[0] == "relu" && f.size() == 1) {
      layers.push_back(LayerSpec::relu());
    } else if (f[0] == "flatten" && f.size() == 1) {
      layers.push_back(LayerSpec::flatten());
    } else {
      throw FormatError("unknown layer token '" + tok + "' in model card");
    }
  }
  return layers;
}

inline std::string shape_to_text(const std::vector<std::size_t>& shape) {
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(shape[i]);
  }
  return out;
}

inline std::vector<std::size_t> shape_from_text(const std::string& text) {
  std::vector<std::size_t> shape;
  for (const std::string& tok : split_on(text, 'x'))
    shape.push_back(io::parse_u64(tok, "input shape"));
  return shape;
}

}  // namespace detail

// Human-readable key=value card, one pair per '\n'-terminated line.
inline std::string model_card_text(const TrainedModel& m) {
  std::string card;
  auto put = [&card](const std::string& k, const std::string& v) {
    card += k;
    card += '=';
    card += v;
    card += '\n';
  };
  put("id", m.descriptor.id);
  put("input_shape", detail::shape_to_text(m.descriptor.input_shape));
  put("classes", std::to_string(m.descriptor.class_count));
  put("init_seed", std::to_string(m.descriptor.init_seed));
  put("layers", detail::layers_to_text(m.descriptor.layers));
  put("epochs", std::to_string(m.meta.epochs));
  put("learning_rate", io::format_double(m.meta.learning_rate));
  put("batch_size", std::to_string(m.meta.batch_size));
  put("train_seed", std::to_string(m.meta.train_seed));
  put("subsample_fraction", io::format_double(m.meta.subsample_fraction));
  put("final_train_accuracy", io::format_double(m.meta.final_train_accuracy));
  put("final_test_accuracy", io::format_double(m.meta.final_test_accuracy));
  return card;
}

inline std::map<std::string, std::string> parse_model_card(const std::string& card) {
  std::map<std::string, std::string> kv;
  std::istringstream in(card);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError("model card line without '=': '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

inline void save_model(const TrainedModel& m, const std::string& path) {
  io::Writer w;
  w.raw(detail::kTrmzMagic, 4);
  w.u8(detail::kTrmzVersion);
  w.str32(model_card_text(m));

  std::uint32_t tensor_count = 0;
  for (const LayerParams& p : m.params)
    if (!p.w.empty()) tensor_count += 2;
  w.u32(tensor_count);

  const auto shapes = m.descriptor.layer_output_shapes();
  std::vector<std::size_t> cur = m.descriptor.input_shape;
  for (std::size_t i = 0; i < m.descriptor.layers.size(); ++i) {
    const LayerSpec& spec = m.descriptor.layers[i];
    if (spec.kind == LayerKind::kDense) {
      w.u8(2);
      w.u32(static_cast<std::uint32_t>(spec.units));
      w.u32(static_cast<std::uint32_t>(cur[0]));
      for (double v : m.params[i].w) w.f32(static_cast<float>(v));
      w.u8(1);
      w.u32(static_cast<std::uint32_t>(spec.units));
      for (double v : m.params[i].b) w.f32(static_cast<float>(v));
    } else if (spec.kind == LayerKind::kConv2d) {
      w.u8(4);
      w.u32(static_cast<std::uint32_t>(spec.out_channels));
      w.u32(static_cast<std::uint32_t>(cur[0]));
      w.u32(static_cast<std::uint32_t>(spec.kernel));
      w.u32(static_cast<std::uint32_t>(spec.kernel));
      for (double v : m.params[i].w) w.f32(static_cast<float>(v));
      w.u8(1);
      w.u32(static_cast<std::uint32_t>(spec.out_channels));
      for (double v : m.params[i].b) w.f32(static_cast<float>(v));
    }
    cur = shapes[i];
  }
  io::write_file(path, w.bytes);
}

inline TrainedModel load_model(const std::string& path) {
  const std::vector<std::uint8_t> bytes = io::read_file(path);
  io::Reader r{bytes.data(), bytes.size()};
  r.expect_magic(detail::kTrmzMagic, "TRMZ");
  const std::uint8_t version = r.u8("version");
  if (version != detail::kTrmzVersion) {
    throw FormatError("unsupported TRMZ version " + std::to_string(version) +
                      " at offset 4");
  }
  const std::string card = r.str32("model card");
  const auto kv = parse_model_card(card);
  auto field = [&kv, &path](const std::string& key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end())
      throw FormatError("model card in " + path + " is missing key '" + key + "'");
    return it->second;
  };

  TrainedModel m;
  m.descriptor.id = field("id");
  m.descriptor.input_shape = detail::shape_from_text(field("input_shape"));
  m.descriptor.class_count = io::parse_u64(field("classes"), "classes");
  m.descriptor.init_seed = io::parse_u64(field("init_seed"), "init_seed");
  m.descriptor.layers = detail::layers_from_text(field("layers"));
  m.meta.epochs = io::parse_u64(field("epochs"), "epochs");
  m.meta.learning_rate = io::parse_double(field("learning_rate"), "learning_rate");
  m.meta.batch_size = io::parse_u64(field("batch_size"), "batch_size");
  m.meta.train_seed = io::parse_u64(field("train_seed"), "train_seed");
  m.meta.subsample_fraction =
      io::parse_double(field("subsample_fraction"), "subsample_fraction");
  m.meta.final_train_accuracy =
      io::parse_double(field("final_train_accuracy"), "final_train_accuracy");
  m.meta.final_test_accuracy =
      io::parse_double(field("final_test_accuracy"), "final_test_accuracy");

  std::vector<std::vector<std::size_t>> shapes;
  try {
    shapes = m.descriptor.layer_output_shapes();
  } catch (const ConfigError& e) {
    throw FormatError("model card in " + path + " describes an invalid network: " +
                      e.what());
  }

  const std::uint32_t tensor_count = r.u32("tensor count");
  std::uint32_t expected = 0;
  for (const LayerSpec& spec : m.descriptor.layers)
    if (spec.kind == LayerKind::kDense || spec.kind == LayerKind::kConv2d) expected += 2;
  if (tensor_count != expected) {
    throw FormatError("tensor count " + std::to_string(tensor_count) +
                      " does not match architecture (expected " +
                      std::to_string(expected) + ")");
  }

  auto read_tensor = [&r](const std::vector<std::size_t>& want_dims,
                          const char* what) -> std::vector<double> {
    const std::size_t at = r.pos;
    const std::uint8_t ndims = r.u8("tensor rank");
    if (ndims != want_dims.size()) {
      throw FormatError(std::string("tensor rank mismatch for ") + what +
                        " at offset " + std::to_string(at));
    }
    std::size_t total = 1;
    for (std::size_t d = 0; d < ndims; ++d) {
      const std::uint32_t dim = r.u32("tensor dim");
      if (dim != want_dims[d]) {
        throw FormatError(std::string("tensor dim mismatch for ") + what +
                          " at offset " + std::to_string(at));
      }
      total *= dim;
    }
    std::vector<double> out(total);
    for (std::size_t k = 0; k < total; ++k)
      out[k] = static_cast<double>(r.f32("tensor data"));
    return out;
  };

  m.params.resize(m.descriptor.layers.size());
  std::vector<std::size_t> cur = m.descriptor.input_shape;
  for (std::size_t i = 0; i < m.descriptor.layers.size(); ++i) {
    const LayerSpec& spec = m.descriptor.layers[i];
    if (spec.kind == LayerKind::kDense) {
      m.params[i].w = read_tensor({spec.units, cur[0]}, "dense weights");
      m.params[i].b = read_tensor({spec.units}, "dense bias");
    } else if (spec.kind == LayerKind::kConv2d) {
      m.params[i].w =
          read_tensor({spec.out_channels, cur[0], spec.kernel, spec.kernel}, "conv weights");
      m.params[i].b = read_tensor({spec.out_channels}, "conv bias");
    }
    cur = shapes[i];
  }
  if (r.pos != r.size) {
    throw FormatError("trailing bytes at offset " + std::to_string(r.pos) + " in " + path);
  }
  return m;
}

}  // namespace tbrisk
