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
#include <string>
#include <vector>

#include "tbrisk/errors.hpp"
#include "tbrisk/io_util.hpp"
#include "tbrisk/similarity.hpp"

namespace tbrisk {

// Surrogate pool construction: the high-similarity pool M1 holds surrogates
// with score >= r1, the low-similarity pool M2 those with score <= r2, and
// the middle band is excluded from testing but kept visible for threshold
// tuning. Both bounds are inclusive.

struct ThresholdPolicy {
  // Shipped defaults for whole-model CKA selection. The diagonal-band preset
  // below carries the higher threshold pair quoted for layer-local scores.
  double r1 = 0.55;
  double r2 = 0.35;
  std::size_t min_m1 = 1;
  std::size_t min_m2 = 1;
  // Minimum number of derived surrogates scored against the target (n > 2).
  // Counts every candidate, including middle-band exclusions: the canonical
  // three-score example selects one surrogate per pool and excludes one.
  std::size_t min_total = 3;
  std::size_t recommended_total = 5;
  std::string method = "diag_band";  // diag_band | cka_linear | cka_rbf

  void validate() const {
    if (!(0.0 < r2 && r2 < r1 && r1 < 1.0))
      throw PolicyError("thresholds must satisfy 0 < r2 < r1 < 1, got r1=" +
                        io::format_double(r1) + " r2=" + io::format_double(r2));
    if (min_m1 < 1 || min_m2 < 1) throw PolicyError("per-pool minimums must be >= 1");
    if (min_total <= 2) throw PolicyError("minimum total must be > 2");
  }

  static ThresholdPolicy cka_preset() {
    ThresholdPolicy p;
    p.r1 = 0.55;
    p.r2 = 0.35;
    p.method = "cka_linear";
    return p;
  }
  // Threshold pair quoted for layer-local (diagonal box) similarity scores.
  static ThresholdPolicy diag_band_preset() {
    ThresholdPolicy p;
    p.r1 = 0.70;
    p.r2 = 0.45;
    p.method = "diag_band";
    return p;
  }
};

struct ScoredSurrogate {
  std::string id;
  double score = 0.0;

  bool operator==(const ScoredSurrogate&) const = default;
};

struct SurrogatePools {
  std::string target_id;
  ThresholdPolicy policy;
  std::vector<ScoredSurrogate> m1;        // score >= r1, descending score
  std::vector<ScoredSurrogate> m2;        // score <= r2, descending score
  std::vector<ScoredSurrogate> excluded;  // r2 < score < r1

  std::size_t total_selected() const { return m1.size() + m2.size(); }
};

namespace detail {

inline void sort_pool(std::vector<ScoredSurrogate>& pool) {
  std::sort(pool.begin(), pool.end(), [](const ScoredSurrogate& a, const ScoredSurrogate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
}

inline std::string nearest_miss(const std::vector<ScoredSurrogate>& excluded,
                                bool toward_high) {
  if (excluded.empty()) return "none";
  // excluded is sorted descending; the nearest miss to m1 is its top entry,
  // to m2 its bottom entry.
  const ScoredSurrogate& s = toward_high ? excluded.front() : excluded.back();
  return s.id + " at " + io::format_double(s.score);
}

}  // namespace detail

// Partitions per-surrogate similarity records against one target into the
// two pools. Deterministic: pools are ordered by descending score, ties by
// id, independent of input order.
inline SurrogatePools select_pools(const std::vector<SimilarityRecord>& records,
                                   const ThresholdPolicy& policy) {
  policy.validate();
  if (records.empty()) throw ConfigError("select_pools needs at least one record");
  if (records.size() < policy.min_total) {
    throw InsufficientPoolError("only " + std::to_string(records.size()) +
                                " derived surrogates scored, policy requires " +
                                std::to_string(policy.min_total));
  }

  const std::string& target = records.front().model_a;
  SurrogatePools pools;
  pools.target_id = target;
  pools.policy = policy;
  for (const SimilarityRecord& r : records) {
    r.validate();
    if (r.model_a != target)
      throw ConfigError("records mix targets: '" + r.model_a + "' vs '" + target + "'");
    if (r.method != policy.method)
      throw ConfigError("record method '" + r.method + "' does not match policy method '" +
                        policy.method + "'");
    const ScoredSurrogate s{r.model_b, r.score};
    if (r.score >= policy.r1) {
      pools.m1.push_back(s);
    } else if (r.score <= policy.r2) {
      pools.m2.push_back(s);
    } else {
      pools.excluded.push_back(s);
    }
  }
  detail::sort_pool(pools.m1);
  detail::sort_pool(pools.m2);
  detail::sort_pool(pools.excluded);

  if (pools.m1.size() < policy.min_m1) {
    throw InsufficientPoolError(
        "high-similarity pool has " + std::to_string(pools.m1.size()) + " surrogates, needs " +
        std::to_string(policy.min_m1) + " (nearest miss: " +
        detail::nearest_miss(pools.excluded, true) + ")");
  }
  if (pools.m2.size() < policy.min_m2) {
    throw InsufficientPoolError(
        "low-similarity pool has " + std::to_string(pools.m2.size()) + " surrogates, needs " +
        std::to_string(policy.min_m2) + " (nearest miss: " +
        detail::nearest_miss(pools.excluded, false) + ")");
  }
  return pools;
}

// Advisory, never an error: flags runs with fewer tested surrogates than the
// recommended count for statistical significance.
struct PoolAdvisory {
  bool below_recommended = false;
  std::string message;
};

inline PoolAdvisory recommend_n(const SurrogatePools& pools, const ThresholdPolicy& policy) {
  PoolAdvisory adv;
  if (pools.total_selected() < policy.recommended_total) {
    adv.below_recommended = true;
    adv.message = "below recommended: " + std::to_string(pools.total_selected()) +
                  " surrogates selected, " + std::to_string(policy.recommended_total) +
                  " recommended for statistical significance";
  }
  return adv;
}

// CSV: one row per surrogate with its pool assignment.
inline constexpr const char* kPoolsCsvHeader = "surrogate,score,pool";

inline std::string pools_csv(const SurrogatePools& pools) {
  std::string out = std::string(kPoolsCsvHeader) + '\n';
  auto rows = [&out](const std::vector<ScoredSurrogate>& pool, const char* name) {
    for (const ScoredSurrogate& s : pool)
      out += s.id + ',' + io::format_double(s.score) + ',' + name + '\n';
  };
  rows(pools.m1, "m1");
  rows(pools.m2, "m2");
  rows(pools.excluded, "excluded");
  return out;
}

// Inverse of pools_csv; target id and policy are carried by the run
// configuration, not the file.
inline SurrogatePools pools_from_csv(const std::string& text, const std::string& target_id,
                                     const ThresholdPolicy& policy) {
  SurrogatePools pools;
  pools.target_id = target_id;
  pools.policy = policy;
  for (const std::vector<std::string>& f :
       io::parse_csv_table(text, kPoolsCsvHeader, "pools csv")) {
    const ScoredSurrogate s{f[0], io::parse_double(f[1], "pool score")};
    if (f[2] == "m1") {
      pools.m1.push_back(s);
    } else if (f[2] == "m2") {
      pools.m2.push_back(s);
    } else if (f[2] == "excluded") {
      pools.excluded.push_back(s);
    } else {
      throw FormatError("pools csv: unknown pool '" + f[2] + "'");
    }
  }
  return pools;
}

// Structured text section for console reports.
inline std::string pools_text(const SurrogatePools& pools) {
  std::string out;
  out += "target: " + pools.target_id + "\n";
  out += "thresholds: r1=" + io::format_double(pools.policy.r1) +
         " r2=" + io::format_double(pools.policy.r2) + " method=" + pools.policy.method + "\n";
  auto section = [&out](const std::vector<ScoredSurrogate>& pool, const char* name) {
    out += std::string(name) + " (" + std::to_string(pool.size()) + "):\n";
    for (const ScoredSurrogate& s : pool)
      out += "  " + s.id + "  " + io::format_double(s.score) + "\n";
  };
  section(pools.m1, "m1 high-similarity");
  section(pools.m2, "m2 low-similarity");
  section(pools.excluded, "excluded middle band");
  const PoolAdvisory adv = recommend_n(pools, pools.policy);
  if (adv.below_recommended) out += "advisory: " + adv.message + "\n";
  return out;
}

}  // namespace tbrisk
