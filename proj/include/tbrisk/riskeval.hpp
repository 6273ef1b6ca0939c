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
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"
#include "tbrisk/attacks.hpp"
#include "tbrisk/errors.hpp"
#include "tbrisk/io_util.hpp"
#include "tbrisk/matrix.hpp"
#include "tbrisk/network.hpp"
#include "tbrisk/rng.hpp"
#include "tbrisk/selection.hpp"

namespace tbrisk {

// Transfer evaluation and risk estimation: adversarials crafted on each
// selected surrogate are replayed against the target, and a regression over
// (similarity, transfer rate) points turns the observations into a risk
// curve with bootstrap uncertainty.

struct TransferRecord {
  std::string surrogate_id;
  AttackConfig config;
  std::size_t n = 0;  // examples evaluated
  double surrogate_restricted = 0.0;   // white-box success on the surrogate
  double target_restricted = 0.0;      // transfer success (originally correct)
  double target_unrestricted = 0.0;    // transfer success (all examples)
  double similarity = 0.0;             // score used for pool selection
  std::string pool;                    // m1 | m2

  void validate() const {
    if (surrogate_id.empty()) throw ConfigError("transfer record needs a surrogate id");
    if (n < 1) throw ConfigError("transfer record needs n >= 1");
    for (double r : {surrogate_restricted, target_restricted, target_unrestricted,
                     similarity}) {
      if (!(r >= 0.0 && r <= 1.0))
        throw NumericalError("transfer record rate " + io::format_double(r) +
                             " outside [0,1]");
    }
  }
};

// Crafts adversarials on the surrogate and scores them on both models. With
// surrogate == target this reproduces the white-box attack_success exactly.
inline TransferRecord transfer_eval(const TrainedModel& surrogate, const TrainedModel& target,
                                    const Matrix& probes, const std::vector<int>& labels,
                                    const AttackConfig& config, double similarity,
                                    const std::string& pool = "") {
  if (shape_size(surrogate.descriptor.input_shape) != shape_size(target.descriptor.input_shape))
    throw ShapeError("surrogate and target disagree on input shape");

  const AdversarialBatch batch = run_attack(surrogate, probes, labels, config);
  const SuccessRates on_surrogate = attack_success(surrogate, batch);
  const SuccessRates on_target = attack_success(target, batch);

  TransferRecord rec;
  rec.surrogate_id = surrogate.descriptor.id;
  rec.config = config;
  rec.n = labels.size();
  rec.surrogate_restricted = on_surrogate.restricted;
  rec.target_restricted = on_target.restricted;
  rec.target_unrestricted = on_target.unrestricted;
  rec.similarity = similarity;
  rec.pool = pool;
  rec.validate();
  return rec;
}

// Mean per-example cosine between the two models' input gradients, one of
// the transferability factors. Zero-gradient examples cannot contribute a
// direction; they are skipped and counted.
struct GradientAlignment {
  double mean_cosine = 0.0;
  std::size_t used = 0;
  std::size_t skipped = 0;
};

inline GradientAlignment gradient_alignment(const TrainedModel& surrogate,
                                            const TrainedModel& target, const Matrix& x,
                                            const std::vector<int>& y) {
  if (shape_size(surrogate.descriptor.input_shape) != shape_size(target.descriptor.input_shape))
    throw ShapeError("surrogate and target disagree on input shape");
  const Matrix gs = input_gradient(surrogate, x, y);
  const Matrix gt = input_gradient(target, x, y);

  GradientAlignment out;
  double sum = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double dot = 0.0, ns = 0.0, nt = 0.0;
    for (std::size_t f = 0; f < x.cols(); ++f) {
      const double a = gs.at(i, f);
      const double b = gt.at(i, f);
      dot += a * b;
      ns += a * a;
      nt += b * b;
    }
    if (ns == 0.0 || nt == 0.0) {
      ++out.skipped;
      continue;
    }
    sum += dot / (std::sqrt(ns) * std::sqrt(nt));
    ++out.used;
  }
  if (out.used == 0)
    throw DegenerateInputError("all examples have zero input gradients");
  out.mean_cosine = sum / static_cast<double>(out.used);
  return out;
}

// Regression of transfer rate on similarity.
struct RiskPoint {
  double similarity = 0.0;
  double rate = 0.0;
};

enum class LinkKind { kIdentity, kLogit };

inline std::string to_string(LinkKind link) {
  return link == LinkKind::kIdentity ? "identity" : "logit";
}

inline LinkKind link_from_string(const std::string& s) {
  if (s == "identity") return LinkKind::kIdentity;
  if (s == "logit") return LinkKind::kLogit;
  throw ConfigError("unknown regression link '" + s + "'");
}

struct RiskRegression {
  double intercept = 0.0;
  double slope = 0.0;
  LinkKind link = LinkKind::kLogit;
  std::vector<double> residuals;  // in link space

  // Response-scale prediction; identity-link output is clamped to [0,1]
  // because the response is a rate.
  double predict(double similarity) const {
    const double lin = intercept + slope * similarity;
    if (link == LinkKind::kIdentity) return std::clamp(lin, 0.0, 1.0);
    return 1.0 / (1.0 + std::exp(-lin));
  }
};

namespace detail {

// Rates are clipped away from {0, 1} before the logit transform.
inline constexpr double kLogitClip = 1e-3;

inline double logit(double p) {
  const double q = std::clamp(p, kLogitClip, 1.0 - kLogitClip);
  return std::log(q / (1.0 - q));
}

}  // namespace detail

// Ordinary least squares on (similarity, rate); the logit link transforms
// the rates first. Solves the 2x2 normal-equation system from raw sums.
inline RiskRegression fit_risk_regression(const std::vector<RiskPoint>& points,
                                          LinkKind link = LinkKind::kLogit) {
  if (points.size() < 3)
    throw InsufficientDataError("regression needs at least 3 points, got " +
                                std::to_string(points.size()));
  const double n = static_cast<double>(points.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  std::vector<double> ys(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double x = points[i].similarity;
    ys[i] = (link == LinkKind::kIdentity) ? points[i].rate : detail::logit(points[i].rate);
    sx += x;
    sy += ys[i];
    sxx += x * x;
    sxy += x * ys[i];
  }
  // Determinant of [[sxx, sx], [sx, n]]; zero when every similarity is the
  // same value. The threshold is relative to the subtracted magnitudes.
  const double det = n * sxx - sx * sx;
  if (det <= 1e-12 * n * sxx)
    throw RankDeficiencyError("similarities are (numerically) all identical");

  RiskRegression model;
  model.link = link;
  model.slope = (n * sxy - sx * sy) / det;
  model.intercept = (sy - model.slope * sx) / n;
  model.residuals.resize(points.size());
  for (std::size_t i = 0; i < points.size(); ++i)
    model.residuals[i] = ys[i] - (model.intercept + model.slope * points[i].similarity);
  if (!std::isfinite(model.slope) || !std::isfinite(model.intercept))
    throw NumericalError("regression produced non-finite coefficients");
  return model;
}

// Percentile bootstrap interval, resampling points with replacement.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double v) const { return lo <= v && v <= hi; }
};

namespace detail {

// Type-7 linear interpolation between order statistics.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double h = q * (static_cast<double>(sorted.size()) - 1.0);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - std::floor(h)) * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

inline Interval bootstrap_ci(const std::vector<RiskPoint>& points,
                             const std::function<double(const std::vector<RiskPoint>&)>& statistic,
                             std::size_t trials, std::uint64_t seed) {
  if (trials < 100) throw ConfigError("bootstrap needs at least 100 trials");
  if (points.size() < 3)
    throw InsufficientDataError("bootstrap needs at least 3 points");

  RngStream rng(seed);
  std::vector<double> stats;
  stats.reserve(trials);
  std::size_t failures = 0;
  std::vector<RiskPoint> resample(points.size());
  for (std::size_t t = 0; t < trials; ++t) {
    for (RiskPoint& p : resample) p = points[rng.next_below(points.size())];
    try {
      stats.push_back(statistic(resample));
    } catch (const Error&) {
      ++failures;  // e.g. rank-deficient resample
    }
  }
  if (failures * 5 > trials) {
    throw InstabilityError(std::to_string(failures) + " of " + std::to_string(trials) +
                           " bootstrap resamples failed");
  }
  std::sort(stats.begin(), stats.end());
  return Interval{detail::quantile_sorted(stats, 0.05), detail::quantile_sorted(stats, 0.95)};
}

// Rank correlation used for directional sanity checks; ties get average
// ranks.
inline double spearman_rank_correlation(const std::vector<double>& a,
                                        const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeError("rank correlation needs equal-length inputs");
  if (a.size() < 3) throw InsufficientDataError("rank correlation needs at least 3 pairs");

  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&v](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    std::size_t i = 0;
    while (i < order.size()) {
      std::size_t j = i;
      while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const std::vector<double> ra = ranks(a);
  const std::vector<double> rb = ranks(b);
  double mean_a = 0.0, mean_b = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    mean_a += ra[i];
    mean_b += rb[i];
  }
  mean_a /= static_cast<double>(ra.size());
  mean_b /= static_cast<double>(rb.size());
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double da = ra[i] - mean_a;
    const double db = rb[i] - mean_b;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  if (saa == 0.0 || sbb == 0.0)
    throw DegenerateInputError("rank correlation undefined for constant input");
  return sab / std::sqrt(saa * sbb);
}

// Self-describing result of one full evaluation run.
struct CurveSample {
  double similarity = 0.0;
  double predicted = 0.0;
};

struct ReportAggregates {
  double worst_case = 0.0;     // max restricted transfer rate observed
  double mean_m1 = 0.0;
  double mean_m2 = 0.0;
  double predicted_at_r1 = 0.0;  // regression extrapolation at r1
};

struct ReportMetadata {
  std::uint64_t master_seed = 0;
  std::string dataset;
  std::string probe_set_id;
  std::string zoo_description;
  std::string generated_at;  // the single nondeterministic field
};

struct RiskReport {
  std::vector<TransferRecord> records;
  RiskRegression regression;
  std::vector<CurveSample> curve;  // 101 equally spaced samples over [0,1]
  ReportAggregates aggregates;
  Interval ci_slope;
  Interval ci_worst_case;
  Interval ci_mean_m1;
  Interval ci_mean_m2;
  Interval ci_predicted_at_r1;
  ThresholdPolicy policy;
  ReportMetadata metadata;

  void validate() const {
    if (curve.size() != 101) throw NumericalError("risk curve must have 101 samples");
    for (const CurveSample& c : curve) {
      if (!(c.predicted >= 0.0 && c.predicted <= 1.0))
        throw NumericalError("curve value outside [0,1]");
    }
    if (aggregates.worst_case + 1e-12 < aggregates.mean_m1 ||
        aggregates.worst_case + 1e-12 < aggregates.mean_m2)
      throw NumericalError("worst_case below a pool mean");
    if (!ci_slope.contains(regression.slope) ||
        !ci_worst_case.contains(aggregates.worst_case) ||
        !ci_mean_m1.contains(aggregates.mean_m1) ||
        !ci_mean_m2.contains(aggregates.mean_m2) ||
        !ci_predicted_at_r1.contains(aggregates.predicted_at_r1))
      throw NumericalError("confidence interval excludes its point estimate");
  }
};

namespace detail {

inline Interval widen_to_contain(Interval ci, double point) {
  // Percentile intervals of extreme statistics (max) can sit strictly below
  // the observed value; the reported interval is the union with the point
  // estimate so the containment contract always holds.
  ci.lo = std::min(ci.lo, point);
  ci.hi = std::max(ci.hi, point);
  return ci;
}

// Bootstrap over a plain list of rates (mean/max statistics). Fewer than 3
// supporting records cannot be resampled meaningfully; the interval
// degenerates to the point estimate.
inline Interval rate_ci(const std::vector<double>& rates,
                        const std::function<double(const std::vector<RiskPoint>&)>& statistic,
                        double point, std::size_t trials, std::uint64_t seed) {
  if (rates.size() < 3) return Interval{point, point};
  std::vector<RiskPoint> pts(rates.size());
  for (std::size_t i = 0; i < rates.size(); ++i) pts[i] = RiskPoint{0.0, rates[i]};
  return widen_to_contain(bootstrap_ci(pts, statistic, trials, seed), point);
}

inline double mean_rate(const std::vector<RiskPoint>& pts) {
  double s = 0.0;
  for (const RiskPoint& p : pts) s += p.rate;
  return s / static_cast<double>(pts.size());
}

inline double max_rate(const std::vector<RiskPoint>& pts) {
  double m = 0.0;
  for (const RiskPoint& p : pts) m = std::max(m, p.rate);
  return m;
}

}  // namespace detail

inline constexpr std::size_t kBootstrapTrials = 1000;

// Assembles the final report. Requires one record per (pool member, attack
// config) cell; the regression runs on restricted transfer rates.
inline RiskReport build_report(const SurrogatePools& pools,
                               const std::vector<TransferRecord>& records,
                               const std::vector<AttackConfig>& attacks,
                               LinkKind link, const ReportMetadata& metadata,
                               std::uint64_t bootstrap_seed = 0,
                               std::size_t trials = kBootstrapTrials) {
  if (attacks.empty()) throw ConfigError("build_report needs at least one attack config");
  for (const TransferRecord& r : records) r.validate();

  // Coverage check: every selected surrogate must have every attack.
  std::string gaps;
  auto has_record = [&records](const std::string& id, const AttackConfig& cfg) {
    for (const TransferRecord& r : records) {
      if (r.surrogate_id == id && r.config.kind == cfg.kind &&
          r.config.epsilon == cfg.epsilon && r.config.steps == cfg.steps)
        return true;
    }
    return false;
  };
  for (const std::vector<ScoredSurrogate>* pool : {&pools.m1, &pools.m2}) {
    for (const ScoredSurrogate& s : *pool) {
      for (const AttackConfig& cfg : attacks) {
        if (!has_record(s.id, cfg)) {
          gaps += (gaps.empty() ? "" : ", ") + s.id + "/" + to_string(cfg.kind);
        }
      }
    }
  }
  if (!gaps.empty())
    throw IncompleteCoverageError("missing transfer records for: " + gaps);

  RiskReport report;
  report.records = records;
  report.policy = pools.policy;
  report.metadata = metadata;

  std::vector<RiskPoint> points;
  std::vector<double> all_rates, m1_rates, m2_rates;
  double worst = 0.0, sum_m1 = 0.0, sum_m2 = 0.0;
  std::size_t n_m1 = 0, n_m2 = 0;
  for (const TransferRecord& r : records) {
    points.push_back(RiskPoint{r.similarity, r.target_restricted});
    all_rates.push_back(r.target_restricted);
    worst = std::max(worst, r.target_restricted);
    if (r.pool == "m1") {
      sum_m1 += r.target_restricted;
      m1_rates.push_back(r.target_restricted);
      ++n_m1;
    } else if (r.pool == "m2") {
      sum_m2 += r.target_restricted;
      m2_rates.push_back(r.target_restricted);
      ++n_m2;
    } else {
      throw ConfigError("transfer record for '" + r.surrogate_id +
                        "' has no pool assignment");
    }
  }
  if (n_m1 == 0 || n_m2 == 0)
    throw IncompleteCoverageError("a pool has no transfer records");

  report.regression = fit_risk_regression(points, link);
  report.curve.resize(101);
  for (std::size_t i = 0; i <= 100; ++i) {
    const double s = static_cast<double>(i) / 100.0;
    report.curve[i] = CurveSample{s, report.regression.predict(s)};
  }

  report.aggregates.worst_case = worst;
  report.aggregates.mean_m1 = sum_m1 / static_cast<double>(n_m1);
  report.aggregates.mean_m2 = sum_m2 / static_cast<double>(n_m2);
  report.aggregates.predicted_at_r1 = report.regression.predict(pools.policy.r1);

  const auto slope_stat = [link](const std::vector<RiskPoint>& pts) {
    return fit_risk_regression(pts, link).slope;
  };
  const auto predict_stat = [link, r1 = pools.policy.r1](const std::vector<RiskPoint>& pts) {
    return fit_risk_regression(pts, link).predict(r1);
  };
  report.ci_slope = detail::widen_to_contain(
      bootstrap_ci(points, slope_stat, trials, derive_seed(bootstrap_seed, "ci", "slope")),
      report.regression.slope);
  report.ci_predicted_at_r1 = detail::widen_to_contain(
      bootstrap_ci(points, predict_stat, trials,
                   derive_seed(bootstrap_seed, "ci", "predicted_at_r1")),
      report.aggregates.predicted_at_r1);
  report.ci_worst_case =
      detail::rate_ci(all_rates, detail::max_rate, report.aggregates.worst_case,
                      trials, derive_seed(bootstrap_seed, "ci", "worst_case"));
  report.ci_mean_m1 =
      detail::rate_ci(m1_rates, detail::mean_rate, report.aggregates.mean_m1,
                      trials, derive_seed(bootstrap_seed, "ci", "mean_m1"));
  report.ci_mean_m2 =
      detail::rate_ci(m2_rates, detail::mean_rate, report.aggregates.mean_m2,
                      trials, derive_seed(bootstrap_seed, "ci", "mean_m2"));

  report.validate();
  return report;
}

// JSON form of the report with insertion-ordered keys, so identical runs
// produce byte-identical documents (generated_at aside).
inline std::string report_json(const RiskReport& report) {
  using json = nlohmann::ordered_json;
  json doc;
  doc["metadata"] = {{"master_seed", report.metadata.master_seed},
                     {"dataset", report.metadata.dataset},
                     {"probe_set", report.metadata.probe_set_id},
                     {"zoo", report.metadata.zoo_description},
                     {"generated_at", report.metadata.generated_at}};
  doc["policy"] = {{"r1", report.policy.r1},
                   {"r2", report.policy.r2},
                   {"method", report.policy.method}};
  doc["regression"] = {{"link", to_string(report.regression.link)},
                       {"intercept", report.regression.intercept},
                       {"slope", report.regression.slope},
                       {"slope_ci90", {report.ci_slope.lo, report.ci_slope.hi}}};
  doc["aggregates"] = {
      {"worst_case", report.aggregates.worst_case},
      {"worst_case_ci90", {report.ci_worst_case.lo, report.ci_worst_case.hi}},
      {"mean_m1", report.aggregates.mean_m1},
      {"mean_m1_ci90", {report.ci_mean_m1.lo, report.ci_mean_m1.hi}},
      {"mean_m2", report.aggregates.mean_m2},
      {"mean_m2_ci90", {report.ci_mean_m2.lo, report.ci_mean_m2.hi}},
      {"predicted_at_r1", report.aggregates.predicted_at_r1},
      {"predicted_at_r1_ci90",
       {report.ci_predicted_at_r1.lo, report.ci_predicted_at_r1.hi}}};
  doc["records"] = json::array();
  for (const TransferRecord& r : report.records) {
    doc["records"].push_back({{"surrogate", r.surrogate_id},
                              {"pool", r.pool},
                              {"attack", to_string(r.config.kind)},
                              {"epsilon", r.config.epsilon},
                              {"steps", r.config.steps},
                              {"n", r.n},
                              {"similarity", r.similarity},
                              {"surrogate_restricted", r.surrogate_restricted},
                              {"target_restricted", r.target_restricted},
                              {"target_unrestricted", r.target_unrestricted}});
  }
  return doc.dump(2) + "\n";
}

// CSV exports for plotting.
inline constexpr const char* kTransferCsvHeader =
    "surrogate,pool,attack,epsilon,steps,n,similarity,"
    "surrogate_restricted,target_restricted,target_unrestricted";

inline std::string transfer_records_csv(const std::vector<TransferRecord>& records) {
  std::string out = std::string(kTransferCsvHeader) + '\n';
  for (const TransferRecord& r : records) {
    out += r.surrogate_id + ',' + r.pool + ',' + to_string(r.config.kind) + ',' +
           io::format_double(r.config.epsilon) + ',' + std::to_string(r.config.steps) +
           ',' + std::to_string(r.n) + ',' + io::format_double(r.similarity) + ',' +
           io::format_double(r.surrogate_restricted) + ',' +
           io::format_double(r.target_restricted) + ',' +
           io::format_double(r.target_unrestricted) + '\n';
  }
  return out;
}

// Inverse of transfer_records_csv. PGD step size, random start and seed are
// execution details not needed downstream; they stay at defaults.
inline std::vector<TransferRecord> transfer_records_from_csv(const std::string& text) {
  std::vector<TransferRecord> out;
  for (const std::vector<std::string>& f :
       io::parse_csv_table(text, kTransferCsvHeader, "transfer csv")) {
    TransferRecord r;
    r.surrogate_id = f[0];
    r.pool = f[1];
    r.config.kind = attack_kind_from_string(f[2]);
    r.config.epsilon = io::parse_double(f[3], "transfer epsilon");
    r.config.steps = io::parse_u64(f[4], "transfer steps");
    r.n = io::parse_u64(f[5], "transfer n");
    r.similarity = io::parse_double(f[6], "transfer similarity");
    r.surrogate_restricted = io::parse_double(f[7], "surrogate rate");
    r.target_restricted = io::parse_double(f[8], "target restricted rate");
    r.target_unrestricted = io::parse_double(f[9], "target unrestricted rate");
    r.validate();
    out.push_back(std::move(r));
  }
  return out;
}

inline constexpr const char* kCurveCsvHeader = "similarity,predicted_rate";

inline std::string curve_csv(const RiskReport& report) {
  std::string out = std::string(kCurveCsvHeader) + '\n';
  for (const CurveSample& c : report.curve)
    out += io::format_double(c.similarity) + ',' + io::format_double(c.predicted) + '\n';
  return out;
}

inline std::vector<CurveSample> curve_from_csv(const std::string& text) {
  std::vector<CurveSample> out;
  for (const std::vector<std::string>& f :
       io::parse_csv_table(text, kCurveCsvHeader, "curve csv")) {
    out.push_back(CurveSample{io::parse_double(f[0], "curve similarity"),
                              io::parse_double(f[1], "curve rate")});
  }
  return out;
}

// Inverse of report_json. The curve is regenerated from the regression (it
// lives in its own CSV), and residuals are not serialized.
inline RiskReport load_report_json(const std::string& text) {
  using json = nlohmann::ordered_json;
  try {
    const json doc = json::parse(text);
    RiskReport r;
    const json& meta = doc.at("metadata");
    r.metadata.master_seed = meta.at("master_seed").get<std::uint64_t>();
    r.metadata.dataset = meta.at("dataset").get<std::string>();
    r.metadata.probe_set_id = meta.at("probe_set").get<std::string>();
    r.metadata.zoo_description = meta.at("zoo").get<std::string>();
    r.metadata.generated_at = meta.at("generated_at").get<std::string>();

    const json& policy = doc.at("policy");
    r.policy.r1 = policy.at("r1").get<double>();
    r.policy.r2 = policy.at("r2").get<double>();
    r.policy.method = policy.at("method").get<std::string>();

    const json& reg = doc.at("regression");
    r.regression.link = link_from_string(reg.at("link").get<std::string>());
    r.regression.intercept = reg.at("intercept").get<double>();
    r.regression.slope = reg.at("slope").get<double>();
    r.ci_slope = Interval{reg.at("slope_ci90").at(0).get<double>(),
                          reg.at("slope_ci90").at(1).get<double>()};

    const json& agg = doc.at("aggregates");
    auto interval = [&agg](const char* key) {
      return Interval{agg.at(key).at(0).get<double>(), agg.at(key).at(1).get<double>()};
    };
    r.aggregates.worst_case = agg.at("worst_case").get<double>();
    r.ci_worst_case = interval("worst_case_ci90");
    r.aggregates.mean_m1 = agg.at("mean_m1").get<double>();
    r.ci_mean_m1 = interval("mean_m1_ci90");
    r.aggregates.mean_m2 = agg.at("mean_m2").get<double>();
    r.ci_mean_m2 = interval("mean_m2_ci90");
    r.aggregates.predicted_at_r1 = agg.at("predicted_at_r1").get<double>();
    r.ci_predicted_at_r1 = interval("predicted_at_r1_ci90");

    for (const json& rec : doc.at("records")) {
      TransferRecord t;
      t.surrogate_id = rec.at("surrogate").get<std::string>();
      t.pool = rec.at("pool").get<std::string>();
      t.config.kind = attack_kind_from_string(rec.at("attack").get<std::string>());
      t.config.epsilon = rec.at("epsilon").get<double>();
      t.config.steps = rec.at("steps").get<std::size_t>();
      t.n = rec.at("n").get<std::size_t>();
      t.similarity = rec.at("similarity").get<double>();
      t.surrogate_restricted = rec.at("surrogate_restricted").get<double>();
      t.target_restricted = rec.at("target_restricted").get<double>();
      t.target_unrestricted = rec.at("target_unrestricted").get<double>();
      t.validate();
      r.records.push_back(std::move(t));
    }

    r.curve.resize(101);
    for (std::size_t i = 0; i <= 100; ++i) {
      const double s = static_cast<double>(i) / 100.0;
      r.curve[i] = CurveSample{s, r.regression.predict(s)};
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report json: ") + e.what());
  }
}

}  // namespace tbrisk
