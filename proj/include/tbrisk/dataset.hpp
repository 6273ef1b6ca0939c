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

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tbrisk/errors.hpp"
#include "tbrisk/matrix.hpp"
#include "tbrisk/rng.hpp"

namespace tbrisk {

enum class DatasetKind { kBlobs, kMoons, kDigits8x8 };

inline std::string to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::kBlobs: return "blobs";
    case DatasetKind::kMoons: return "moons";
    case DatasetKind::kDigits8x8: return "digits8x8";
  }
  return "?";
}

inline DatasetKind dataset_kind_from_string(const std::string& s) {
  if (s == "blobs") return DatasetKind::kBlobs;
  if (s == "moons") return DatasetKind::kMoons;
  if (s == "digits8x8") return DatasetKind::kDigits8x8;
  throw ConfigError("unsupported dataset kind: " + s);
}

enum class Split : std::uint8_t { kTrain = 0, kTest = 1 };

// Geometry knobs with desk-scale defaults. The 4-argument generate_dataset
// overload uses these defaults unchanged.
struct DatasetOptions {
  std::size_t blobs_dim = 8;
  double blobs_std = 0.08;
  double blobs_min_center_dist = 0.45;  // L2, enforced by rejection
  double moons_noise = 0.06;
  double digits_noise = 0.08;
  double test_fraction = 0.25;
};

// Labeled inputs in [0,1]^d with a deterministic train/test split.
struct Dataset {
  DatasetKind kind;
  std::size_t classes;
  std::uint64_t seed;
  Matrix inputs;             // n x d
  std::vector<int> labels;   // values in [0, classes)
  std::vector<Split> split;  // per row

  std::size_t n() const { return inputs.rows(); }
  std::size_t dim() const { return inputs.cols(); }

  std::vector<std::size_t> indices_of(Split s) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < split.size(); ++i)
      if (split[i] == s) idx.push_back(i);
    return idx;
  }

  Matrix rows_at(const std::vector<std::size_t>& idx) const {
    if (idx.empty()) throw DegenerateInputError("empty row selection");
    Matrix out(idx.size(), inputs.cols());
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t c = 0; c < inputs.cols(); ++c)
        out.set(r, c, inputs.at(idx[r], c));
    return out;
  }

  std::vector<int> labels_at(const std::vector<std::size_t>& idx) const {
    std::vector<int> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(labels[i]);
    return out;
  }
};

namespace detail {

inline double clip01(double v) { return std::min(1.0, std::max(0.0, v)); }

// Class sizes balanced within +-1: the first n % classes classes get the
// extra sample.
inline std::vector<std::size_t> balanced_counts(std::size_t n, std::size_t classes) {
  std::vector<std::size_t> counts(classes, n / classes);
  for (std::size_t c = 0; c < n % classes; ++c) counts[c] += 1;
  return counts;
}

// 8x8 glyph templates for the ten digits, seven-segment style.
inline const std::array<const char*, 10>& digit_glyphs() {
  static const std::array<const char*, 10> glyphs = {
      // 0
      ".######."
      ".#....#."
      ".#....#."
      ".#....#."
      ".#....#."
      ".#....#."
      ".#....#."
      ".######.",
      // 1
      "....#..."
      "...##..."
      "....#..."
      "....#..."
      "....#..."
      "....#..."
      "....#..."
      "...###..",
      // 2
      ".######."
      "......#."
      "......#."
      ".######."
      ".#......"
      ".#......"
      ".#......"
      ".######.",
      // 3
      ".######."
      "......#."
      "......#."
      ".######."
      "......#."
      "......#."
      "......#."
      ".######.",
      // 4
      ".#....#."
      ".#....#."
      ".#....#."
      ".######."
      "......#."
      "......#."
      "......#."
      "......#.",
      // 5
      ".######."
      ".#......"
      ".#......"
      ".######."
      "......#."
      "......#."
      "......#."
      ".######.",
      // 6
      ".######."
      ".#......"
      ".#......"
      ".######."
      ".#....#."
      ".#....#."
      ".#....#."
      ".######.",
      // 7
      ".######."
      "......#."
      "......#."
      ".....#.."
      "....#..."
      "....#..."
      "....#..."
      "....#...",
      // 8
      ".######."
      ".#....#."
      ".#....#."
      ".######."
      ".#....#."
      ".#....#."
      ".#....#."
      ".######.",
      // 9
      ".######."
      ".#....#."
      ".#....#."
      ".######."
      "......#."
      "......#."
      "......#."
      ".######.",
  };
  return glyphs;
}

}  // namespace detail

// Builds a procedurally generated dataset. Deterministic for fixed
// (kind, n, classes, seed, options); classes are balanced within one sample
// and inputs are clipped to [0,1]. The split is stratified: within each
// class, the last round(count * test_fraction) generated samples (at least
// one) form the test split, so every class appears in both splits.
inline Dataset generate_dataset(DatasetKind kind, std::size_t n, std::size_t classes,
                                std::uint64_t seed,
                                const DatasetOptions& opt = DatasetOptions{}) {
  if (classes < 2) throw ConfigError("dataset needs at least 2 classes");
  if (n < 10 * classes) {
    throw ConfigError("dataset size " + std::to_string(n) + " below minimum " +
                      std::to_string(10 * classes) + " (10 per class)");
  }

  RngStream rng(seed);
  const std::vector<std::size_t> counts = detail::balanced_counts(n, classes);

  std::size_t dim = 0;
  std::vector<std::vector<double>> centers;  // blobs only
  switch (kind) {
    case DatasetKind::kBlobs: {
      dim = opt.blobs_dim;
      if (dim == 0) throw ConfigError("blobs dimension must be positive");
      // Rejection-sample the center set until all pairwise distances clear
      // the separation floor (bounded attempts keep this total).
      for (int attempt = 0; attempt < 500; ++attempt) {
        centers.clear();
        for (std::size_t c = 0; c < classes; ++c) {
          std::vector<double> ctr(dim);
          for (double& v : ctr) v = rng.uniform(0.2, 0.8);
          centers.push_back(std::move(ctr));
        }
        double min_d = 1e300;
        for (std::size_t a = 0; a < classes; ++a) {
          for (std::size_t b = a + 1; b < classes; ++b) {
            double d2 = 0.0;
            for (std::size_t f = 0; f < dim; ++f) {
              const double d = centers[a][f] - centers[b][f];
              d2 += d * d;
            }
            min_d = std::min(min_d, std::sqrt(d2));
          }
        }
        if (min_d >= opt.blobs_min_center_dist) break;
        centers.clear();
      }
      if (centers.empty()) {
        throw ConfigError("could not place " + std::to_string(classes) +
                          " blob centers with separation " +
                          std::to_string(opt.blobs_min_center_dist));
      }
      break;
    }
    case DatasetKind::kMoons:
      if (classes != 2) throw ConfigError("moons supports exactly 2 classes");
      dim = 2;
      break;
    case DatasetKind::kDigits8x8:
      if (classes > 10) throw ConfigError("digits8x8 supports at most 10 classes");
      dim = 64;
      break;
  }

  Matrix inputs(n, dim);
  std::vector<int> labels(n);
  std::vector<Split> split(n, Split::kTrain);

  std::size_t row = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    const std::size_t count = counts[c];
    std::size_t n_test = static_cast<std::size_t>(
        std::lround(static_cast<double>(count) * opt.test_fraction));
    n_test = std::max<std::size_t>(1, std::min(n_test, count - 1));

    for (std::size_t s = 0; s < count; ++s, ++row) {
      labels[row] = static_cast<int>(c);
      if (s >= count - n_test) split[row] = Split::kTest;

      switch (kind) {
        case DatasetKind::kBlobs: {
          for (std::size_t f = 0; f < dim; ++f) {
            inputs.set(row, f,
                       detail::clip01(centers[c][f] + opt.blobs_std * rng.normal()));
          }
          break;
        }
        case DatasetKind::kMoons: {
          const double t = rng.uniform(0.0, 3.14159265358979323846);
          double x, y;
          if (c == 0) {
            x = std::cos(t);
            y = std::sin(t);
          } else {
            x = 1.0 - std::cos(t);
            y = 0.5 - std::sin(t);
          }
          // Map the raw range x in [-1,2], y in [-0.5,1] into [0.1, 0.9].
          x = 0.1 + 0.8 * (x + 1.0) / 3.0;
          y = 0.1 + 0.8 * (y + 0.5) / 1.5;
          inputs.set(row, 0, detail::clip01(x + opt.moons_noise * rng.normal()));
          inputs.set(row, 1, detail::clip01(y + opt.moons_noise * rng.normal()));
          break;
        }
        case DatasetKind::kDigits8x8: {
          const char* glyph = detail::digit_glyphs()[c];
          const int dx = static_cast<int>(rng.next_below(3)) - 1;
          const int dy = static_cast<int>(rng.next_below(3)) - 1;
          for (int py = 0; py < 8; ++py) {
            for (int px = 0; px < 8; ++px) {
              const int sy = py - dy;
              const int sx = px - dx;
              double base = 0.12;
              if (sy >= 0 && sy < 8 && sx >= 0 && sx < 8 &&
                  glyph[sy * 8 + sx] == '#') {
                base = 0.85;
              }
              inputs.set(row, static_cast<std::size_t>(py * 8 + px),
                         detail::clip01(base + opt.digits_noise * rng.normal()));
            }
          }
          break;
        }
      }
    }
  }

  Dataset ds{kind, classes, seed, std::move(inputs), std::move(labels), std::move(split)};

  // Invariants: both splits populated, every class in train.
  std::vector<bool> seen(classes, false);
  std::size_t n_train = 0, n_test = 0;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    if (ds.split[i] == Split::kTrain) {
      ++n_train;
      seen[static_cast<std::size_t>(ds.labels[i])] = true;
    } else {
      ++n_test;
    }
  }
  if (n_train == 0 || n_test == 0)
    throw DegenerateInputError("dataset split left a side empty");
  for (std::size_t c = 0; c < classes; ++c) {
    if (!seen[c])
      throw DegenerateInputError("class " + std::to_string(c) + " missing from train split");
  }
  return ds;
}

}  // namespace tbrisk
