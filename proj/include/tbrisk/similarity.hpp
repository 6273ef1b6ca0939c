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
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "tbrisk/activations.hpp"
#include "tbrisk/errors.hpp"
#include "tbrisk/io_util.hpp"
#include "tbrisk/matrix.hpp"

namespace tbrisk {

// Representational similarity between two networks, computed from the
// activations a shared probe set induces. Centered kernel alignment (CKA)
// normalizes the Hilbert-Schmidt independence criterion (HSIC) of the two
// Gram matrices into a score between 0 and 1.

enum class KernelKind { kLinear, kRbf };

struct KernelSpec {
  KernelKind kind = KernelKind::kLinear;
  // Empty bandwidth selects the median heuristic: the median of pairwise
  // Euclidean distances over the probe set.
  std::optional<double> bandwidth;

  static KernelSpec linear() { return KernelSpec{KernelKind::kLinear, std::nullopt}; }
  static KernelSpec rbf() { return KernelSpec{KernelKind::kRbf, std::nullopt}; }
  static KernelSpec rbf_with_bandwidth(double sigma) {
    return KernelSpec{KernelKind::kRbf, sigma};
  }

  std::string method_label() const {
    return kind == KernelKind::kLinear ? "cka_linear" : "cka_rbf";
  }
};

enum class HsicEstimator { kBiased, kUnbiased };

// Median of the n(n-1)/2 pairwise Euclidean distances; even counts average
// the two middle order statistics.
inline double median_pairwise_distance(const Matrix& x) {
  if (x.rows() < 2) throw DegenerateInputError("median distance needs at least 2 rows");
  std::vector<double> dists;
  dists.reserve(x.rows() * (x.rows() - 1) / 2);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = i + 1; j < x.rows(); ++j) {
      double s = 0.0;
      for (std::size_t f = 0; f < x.cols(); ++f) {
        const double d = x.at(i, f) - x.at(j, f);
        s += d * d;
      }
      dists.push_back(std::sqrt(s));
    }
  }
  std::sort(dists.begin(), dists.end());
  const std::size_t m = dists.size();
  return (m % 2 == 1) ? dists[m / 2] : 0.5 * (dists[m / 2 - 1] + dists[m / 2]);
}

// Gram matrix of the rows of x. Linear: K = XX^T. RBF:
// K_ij = exp(-|x_i - x_j|^2 / (2 sigma^2)).
inline Matrix gram(const Matrix& x, const KernelSpec& kernel) {
  if (x.rows() < 2) throw DegenerateInputError("gram needs at least 2 rows");
  const std::size_t n = x.rows();
  Matrix k(n, n);
  if (kernel.kind == KernelKind::kLinear) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i; j < n; ++j) {
        double s = 0.0;
        for (std::size_t f = 0; f < x.cols(); ++f) s += x.at(i, f) * x.at(j, f);
        k.set(i, j, s);
        k.set(j, i, s);
      }
    }
  } else {
    double sigma;
    if (kernel.bandwidth.has_value()) {
      sigma = *kernel.bandwidth;
      if (!(sigma > 0.0)) throw ConfigError("rbf bandwidth must be positive");
    } else {
      sigma = median_pairwise_distance(x);
      if (sigma <= 0.0)
        throw DegenerateInputError("median-heuristic bandwidth is zero (duplicate rows only)");
    }
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i; j < n; ++j) {
        double s = 0.0;
        for (std::size_t f = 0; f < x.cols(); ++f) {
          const double d = x.at(i, f) - x.at(j, f);
          s += d * d;
        }
        const double v = std::exp(-s * inv);
        k.set(i, j, v);
        k.set(j, i, v);
      }
    }
  }
  k.check_finite();
  return k;
}

namespace detail {

// Doubly centered copy HKH with H = I - (1/n) 11^T, computed from row, column
// and grand means so both HSIC arguments center identically.
inline Matrix center_gram(const Matrix& k) {
  const std::size_t n = k.rows();
  std::vector<double> row_mean(n, 0.0);
  double grand = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += k.at(i, j);
    row_mean[i] = s / static_cast<double>(n);
    grand += s;
  }
  grand /= static_cast<double>(n) * static_cast<double>(n);
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out.set(i, j, k.at(i, j) - row_mean[i] - row_mean[j] + grand);
  return out;
}

inline void require_square_pair(const Matrix& k, const Matrix& l) {
  if (k.rows() != k.cols() || l.rows() != l.cols())
    throw ShapeError("hsic arguments must be square");
  if (k.rows() != l.rows())
    throw ShapeError("hsic arguments disagree on n: " + std::to_string(k.rows()) +
                     " vs " + std::to_string(l.rows()));
}

// Components of the unbiased U-statistic estimator, accumulated separately so
// minibatch mode can sum them across batches before normalizing.
struct HsicTerms {
  double xy = 0.0;
  double xx = 0.0;
  double yy = 0.0;
};

inline double hsic_unbiased(const Matrix& k, const Matrix& l) {
  const std::size_t n = k.rows();
  if (n < 4) throw DegenerateInputError("unbiased hsic needs n >= 4");
  const double dn = static_cast<double>(n);
  // K~ and L~ are the Grams with zeroed diagonals; all three reductions are
  // computed from row sums so argument order cannot perturb rounding.
  double trace = 0.0, sum_k = 0.0, sum_l = 0.0, cross = 0.0;
  std::vector<double> rk(n, 0.0), rl(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      rk[i] += k.at(i, j);
      rl[i] += l.at(i, j);
      trace += k.at(i, j) * l.at(i, j);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    sum_k += rk[i];
    sum_l += rl[i];
    cross += rk[i] * rl[i];
  }
  return (trace + sum_k * sum_l / ((dn - 1.0) * (dn - 2.0)) -
          2.0 * cross / (dn - 2.0)) /
         (dn * (dn - 3.0));
}

inline double hsic_biased(const Matrix& k, const Matrix& l) {
  const std::size_t n = k.rows();
  if (n < 2) throw DegenerateInputError("biased hsic needs n >= 2");
  const Matrix ck = center_gram(k);
  const Matrix cl = center_gram(l);
  double s = 0.0;
  for (std::size_t idx = 0; idx < ck.size(); ++idx) s += ck.data()[idx] * cl.data()[idx];
  const double dn = static_cast<double>(n);
  return s / ((dn - 1.0) * (dn - 1.0));
}

}  // namespace detail

// tr(KHLH)/(n-1)^2 for the biased estimator; the standard U-statistic for
// the unbiased one. Exactly symmetric in its arguments.
inline double hsic(const Matrix& k, const Matrix& l, HsicEstimator estimator) {
  detail::require_square_pair(k, l);
  return estimator == HsicEstimator::kBiased ? detail::hsic_biased(k, l)
                                             : detail::hsic_unbiased(k, l);
}

// One similarity result. layer_a/layer_b hold decimal layer indices for
// per-layer scores and the literal "aggregate" for whole-model scores.
struct SimilarityRecord {
  std::string model_a;
  std::string model_b;
  std::string method;  // cka_linear | cka_rbf | diag_band
  std::string layer_a;
  std::string layer_b;
  double score = 0.0;
  std::size_t n = 0;
  std::string probe_set_id;
  bool clamped_negative = false;  // diagnostic, not serialized to CSV

  void validate() const {
    if (model_a.empty() || model_b.empty())
      throw ConfigError("similarity record needs both model ids");
    if (n < 2) throw ConfigError("similarity record needs n >= 2");
    if (score < 0.0 || score > 1.0)
      throw NumericalError("similarity score " + io::format_double(score) +
                           " outside [0,1]");
  }
};

namespace detail {

struct CkaScore {
  double score = 0.0;
  bool clamped_negative = false;
};

// Normalizes a raw CKA ratio into [0,1]. Drift beyond 1e-6 above 1 is an
// internal error; negative values are an error for the biased estimator
// (mathematically nonnegative) and are clamped to 0 with a flag for the
// unbiased one, whose U-statistic may legitimately dip below zero.
inline CkaScore clamp_cka(double raw, HsicEstimator estimator) {
  constexpr double kSlack = 1e-6;
  if (!std::isfinite(raw)) throw NumericalError("cka score is not finite");
  if (raw > 1.0 + kSlack)
    throw NumericalError("cka score " + io::format_double(raw) + " exceeds 1");
  if (raw < -kSlack) {
    if (estimator == HsicEstimator::kBiased)
      throw NumericalError("biased cka score " + io::format_double(raw) + " below 0");
    return CkaScore{0.0, true};
  }
  return CkaScore{std::clamp(raw, 0.0, 1.0), false};
}

inline CkaScore cka_from_grams(const Matrix& kx, const Matrix& ky, HsicEstimator estimator) {
  const double hxy = hsic(kx, ky, estimator);
  const double hxx = hsic(kx, kx, estimator);
  const double hyy = hsic(ky, ky, estimator);
  const std::size_t n = kx.rows();
  // Self-HSIC at rounding-noise scale means the activations carry no usable
  // variance; a ratio of noise is reported as degenerate, not as a score.
  const double scale_x = std::pow(frobenius_norm(kx) / static_cast<double>(n - 1), 2.0);
  const double scale_y = std::pow(frobenius_norm(ky) / static_cast<double>(n - 1), 2.0);
  if (!(hxx > 1e-10 * scale_x) || scale_x == 0.0)
    throw DegenerateInputError("first argument has (near-)constant activations");
  if (!(hyy > 1e-10 * scale_y) || scale_y == 0.0)
    throw DegenerateInputError("second argument has (near-)constant activations");
  return clamp_cka(hxy / std::sqrt(hxx * hyy), estimator);
}

}  // namespace detail

// CKA between two activation matrices captured on the same probe set.
inline SimilarityRecord cka(const ActivationMatrix& x, const ActivationMatrix& y,
                            const KernelSpec& kernel = KernelSpec::linear(),
                            HsicEstimator estimator = HsicEstimator::kBiased) {
  x.validate();
  y.validate();
  if (x.probe_set_id != y.probe_set_id)
    throw ConfigError("probe-set mismatch: '" + x.probe_set_id + "' vs '" +
                      y.probe_set_id + "'");
  if (x.data.rows() != y.data.rows())
    throw ShapeError("activation matrices disagree on probe count");

  const Matrix kx = gram(x.data, kernel);
  const Matrix ky = gram(y.data, kernel);
  const detail::CkaScore s = detail::cka_from_grams(kx, ky, estimator);

  SimilarityRecord rec;
  rec.model_a = x.model_id;
  rec.model_b = y.model_id;
  rec.method = kernel.method_label();
  rec.layer_a = std::to_string(x.layer_index);
  rec.layer_b = std::to_string(y.layer_index);
  rec.score = s.score;
  rec.n = x.data.rows();
  rec.probe_set_id = x.probe_set_id;
  rec.clamped_negative = s.clamped_negative;
  rec.validate();
  return rec;
}

// All-pairs layer CKA between two captured models. Cells whose activations
// are degenerate are recorded as missing, never as 0.
struct LayerSimilarityMatrix {
  std::string model_a;
  std::string model_b;
  std::string method;
  std::vector<std::size_t> layers_a;  // captured layer indices, row order
  std::vector<std::size_t> layers_b;  // captured layer indices, column order
  std::vector<std::optional<double>> grid;  // row-major layers_a x layers_b
  std::size_t n = 0;
  std::string probe_set_id;

  std::size_t rows() const { return layers_a.size(); }
  std::size_t cols() const { return layers_b.size(); }
  const std::optional<double>& at(std::size_t i, std::size_t j) const {
    return grid[i * layers_b.size() + j];
  }
};

inline LayerSimilarityMatrix layer_matrix(const std::vector<ActivationMatrix>& acts_a,
                                          const std::vector<ActivationMatrix>& acts_b,
                                          const KernelSpec& kernel = KernelSpec::linear(),
                                          HsicEstimator estimator = HsicEstimator::kBiased) {
  if (acts_a.empty() || acts_b.empty())
    throw ConfigError("layer_matrix needs non-empty activation lists");
  for (const ActivationMatrix& m : acts_a) m.validate();
  for (const ActivationMatrix& m : acts_b) m.validate();
  const std::string& probe = acts_a.front().probe_set_id;
  for (const ActivationMatrix& m : acts_a)
    if (m.probe_set_id != probe) throw ConfigError("mixed probe sets on side a");
  for (const ActivationMatrix& m : acts_b)
    if (m.probe_set_id != probe)
      throw ConfigError("probe-set mismatch: '" + m.probe_set_id + "' vs '" + probe + "'");

  LayerSimilarityMatrix lm;
  lm.model_a = acts_a.front().model_id;
  lm.model_b = acts_b.front().model_id;
  lm.method = kernel.method_label();
  lm.n = acts_a.front().data.rows();
  lm.probe_set_id = probe;
  for (const ActivationMatrix& m : acts_a) lm.layers_a.push_back(m.layer_index);
  for (const ActivationMatrix& m : acts_b) lm.layers_b.push_back(m.layer_index);

  // Grams depend only on one side, so hoist them out of the pair loop.
  std::vector<Matrix> grams_a, grams_b;
  for (const ActivationMatrix& m : acts_a) grams_a.push_back(gram(m.data, kernel));
  for (const ActivationMatrix& m : acts_b) grams_b.push_back(gram(m.data, kernel));

  lm.grid.reserve(acts_a.size() * acts_b.size());
  for (std::size_t i = 0; i < acts_a.size(); ++i) {
    for (std::size_t j = 0; j < acts_b.size(); ++j) {
      try {
        lm.grid.push_back(detail::cka_from_grams(grams_a[i], grams_b[j], estimator).score);
      } catch (const DegenerateInputError&) {
        lm.grid.push_back(std::nullopt);
      }
    }
  }
  return lm;
}

// Whole-model score from a layer grid.
enum class AggregateMode { kMeanDiagBand, kMeanAll, kFinalLayer };

inline std::string to_string(AggregateMode m) {
  switch (m) {
    case AggregateMode::kMeanDiagBand: return "mean_diag_band";
    case AggregateMode::kMeanAll: return "mean_all";
    case AggregateMode::kFinalLayer: return "final_layer";
  }
  throw ConfigError("unknown aggregate mode");
}

// mean_diag_band averages the cells near the main diagonal in relative
// depth: keep (i, j) when |i/L_a - j/L_b| <= w over 0-based positions. It is
// a stand-in for the diagonal box similarity score of the literature, whose
// exact computation is not public; only its threshold ranges are reused.
inline SimilarityRecord aggregate_score(const LayerSimilarityMatrix& lm, AggregateMode mode,
                                        double band_width = 0.25) {
  if (lm.grid.empty()) throw ConfigError("aggregate_score needs a non-empty grid");
  if (band_width < 0.0) throw ConfigError("band width must be >= 0");
  const std::size_t la = lm.rows(), lb = lm.cols();

  double sum = 0.0;
  std::size_t count = 0;
  auto take = [&](std::size_t i, std::size_t j) {
    const std::optional<double>& cell = lm.at(i, j);
    if (!cell.has_value()) return;
    sum += *cell;
    ++count;
  };

  switch (mode) {
    case AggregateMode::kMeanDiagBand:
      for (std::size_t i = 0; i < la; ++i) {
        for (std::size_t j = 0; j < lb; ++j) {
          const double rel = std::abs(static_cast<double>(i) / static_cast<double>(la) -
                                      static_cast<double>(j) / static_cast<double>(lb));
          if (rel <= band_width) take(i, j);
        }
      }
      break;
    case AggregateMode::kMeanAll:
      for (std::size_t i = 0; i < la; ++i)
        for (std::size_t j = 0; j < lb; ++j) take(i, j);
      break;
    case AggregateMode::kFinalLayer:
      take(la - 1, lb - 1);
      break;
  }
  if (count == 0)
    throw ConfigError("aggregate mode " + to_string(mode) + " selected no usable cells");

  SimilarityRecord rec;
  rec.model_a = lm.model_a;
  rec.model_b = lm.model_b;
  rec.method = (mode == AggregateMode::kMeanDiagBand) ? "diag_band" : lm.method;
  rec.layer_a = "aggregate";
  rec.layer_b = "aggregate";
  rec.score = sum / static_cast<double>(count);
  rec.n = lm.n;
  rec.probe_set_id = lm.probe_set_id;
  rec.validate();
  return rec;
}

// Memory-bounded CKA: unbiased HSIC terms are accumulated over matching
// batch partitions of one probe set and normalized once at the end. The
// result is invariant to batch order because only sums are kept.
inline SimilarityRecord minibatch_cka(const std::vector<ActivationMatrix>& x_batches,
                                      const std::vector<ActivationMatrix>& y_batches,
                                      const KernelSpec& kernel = KernelSpec::linear()) {
  if (x_batches.empty() || x_batches.size() != y_batches.size())
    throw ConfigError("minibatch_cka needs matching non-empty batch lists");
  const std::string& probe = x_batches.front().probe_set_id;

  detail::HsicTerms terms;
  double scale_x = 0.0, scale_y = 0.0;
  std::size_t total_n = 0;
  for (std::size_t b = 0; b < x_batches.size(); ++b) {
    const ActivationMatrix& xb = x_batches[b];
    const ActivationMatrix& yb = y_batches[b];
    xb.validate();
    yb.validate();
    if (xb.probe_set_id != probe || yb.probe_set_id != probe)
      throw ConfigError("minibatch_cka batches disagree on probe set");
    if (xb.data.rows() != yb.data.rows())
      throw ConfigError("batch " + std::to_string(b) + " row counts differ");
    if (xb.data.rows() < 4)
      throw DegenerateInputError("batch " + std::to_string(b) +
                                 " has n < 4 (unbiased estimator)");
    const Matrix kx = gram(xb.data, kernel);
    const Matrix ky = gram(yb.data, kernel);
    terms.xy += detail::hsic_unbiased(kx, ky);
    terms.xx += detail::hsic_unbiased(kx, kx);
    terms.yy += detail::hsic_unbiased(ky, ky);
    const double nb = static_cast<double>(xb.data.rows() - 1);
    scale_x += std::pow(frobenius_norm(kx) / nb, 2.0);
    scale_y += std::pow(frobenius_norm(ky) / nb, 2.0);
    total_n += xb.data.rows();
  }
  if (!(terms.xx > 1e-10 * scale_x) || scale_x == 0.0)
    throw DegenerateInputError("first argument has (near-)constant activations");
  if (!(terms.yy > 1e-10 * scale_y) || scale_y == 0.0)
    throw DegenerateInputError("second argument has (near-)constant activations");

  const detail::CkaScore s = detail::clamp_cka(
      terms.xy / std::sqrt(terms.xx * terms.yy), HsicEstimator::kUnbiased);

  SimilarityRecord rec;
  rec.model_a = x_batches.front().model_id;
  rec.model_b = y_batches.front().model_id;
  rec.method = kernel.method_label();
  rec.layer_a = std::to_string(x_batches.front().layer_index);
  rec.layer_b = std::to_string(y_batches.front().layer_index);
  rec.score = s.score;
  rec.n = total_n;
  rec.probe_set_id = probe;
  rec.clamped_negative = s.clamped_negative;
  rec.validate();
  return rec;
}

// CSV emission: fixed column order, header row included, numbers via the
// locale-independent shortest-round-trip formatter.
inline constexpr const char* kSimilarityCsvHeader =
    "model_a,model_b,method,layer_a,layer_b,score,n,probe_set";

inline std::string similarity_csv(const std::vector<SimilarityRecord>& records) {
  std::string out = std::string(kSimilarityCsvHeader) + '\n';
  for (const SimilarityRecord& r : records) {
    out += r.model_a + ',' + r.model_b + ',' + r.method + ',' + r.layer_a + ',' +
           r.layer_b + ',' + io::format_double(r.score) + ',' + std::to_string(r.n) +
           ',' + r.probe_set_id + '\n';
  }
  return out;
}

inline std::vector<SimilarityRecord> similarity_records_from_csv(const std::string& text) {
  std::vector<SimilarityRecord> out;
  for (const std::vector<std::string>& f :
       io::parse_csv_table(text, kSimilarityCsvHeader, "similarity csv")) {
    SimilarityRecord r;
    r.model_a = f[0];
    r.model_b = f[1];
    r.method = f[2];
    r.layer_a = f[3];
    r.layer_b = f[4];
    r.score = io::parse_double(f[5], "similarity score");
    r.n = io::parse_u64(f[6], "similarity n");
    r.probe_set_id = f[7];
    r.validate();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace tbrisk
