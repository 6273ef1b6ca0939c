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
#include <string>
#include <vector>

#include "tbrisk/errors.hpp"
#include "tbrisk/io_util.hpp"
#include "tbrisk/matrix.hpp"
#include "tbrisk/network.hpp"
#include "tbrisk/rng.hpp"

namespace tbrisk {

// White-box evasion attacks run on surrogate models; the resulting batches
// are replayed against the target to measure transfer. Untargeted only, L-inf
// budget, inputs live in [0,1].

enum class AttackKind { kFgsm, kPgd };

inline std::string to_string(AttackKind k) {
  return k == AttackKind::kFgsm ? "fgsm" : "pgd";
}

inline AttackKind attack_kind_from_string(const std::string& s) {
  if (s == "fgsm") return AttackKind::kFgsm;
  if (s == "pgd") return AttackKind::kPgd;
  throw ConfigError("unknown attack kind '" + s + "'");
}

struct AttackConfig {
  AttackKind kind = AttackKind::kFgsm;
  double epsilon = 0.1;      // L-inf budget in input units
  double alpha = 0.01;       // pgd step size
  std::size_t steps = 1;     // pgd iterations
  bool random_start = false; // pgd: uniform start inside the epsilon ball
  std::uint64_t seed = 0;

  void validate() const {
    if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be >= 0");
    if (kind == AttackKind::kPgd) {
      if (!(alpha > 0.0)) throw ConfigError("pgd step size must be > 0");
      if (steps < 1) throw ConfigError("pgd needs at least 1 step");
    }
  }

  // alpha > epsilon wastes budget but is not an error.
  std::string warning() const {
    if (kind == AttackKind::kPgd && alpha > epsilon)
      return "pgd step size " + io::format_double(alpha) + " exceeds epsilon " +
             io::format_double(epsilon);
    return "";
  }
};

struct AdversarialBatch {
  Matrix originals{1, 1};
  Matrix adversarials{1, 1};
  std::vector<int> labels;
  std::string source_model_id;
  AttackConfig config;

  // Hard constraints: every adversarial is inside the epsilon ball around
  // its original and inside [0,1]. Asserted on every emitted batch.
  void validate() const {
    if (!originals.same_shape(adversarials))
      throw ShapeError("adversarial batch shapes differ");
    if (labels.size() != originals.rows())
      throw ShapeError("adversarial batch label count mismatch");
    const double budget = config.epsilon + 1e-6;
    for (std::size_t k = 0; k < originals.size(); ++k) {
      const double adv = adversarials.data()[k];
      if (std::abs(adv - originals.data()[k]) > budget)
        throw NumericalError("adversarial exceeds epsilon ball at flat index " +
                             std::to_string(k));
      if (adv < 0.0 || adv > 1.0)
        throw NumericalError("adversarial outside [0,1] at flat index " +
                             std::to_string(k));
    }
  }
};

namespace detail {

// sign(0) = 0: zero-gradient coordinates stay untouched.
inline double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace detail

// Single sign-gradient step: adv = clip_[0,1](x + eps * sign(dloss/dx)).
inline AdversarialBatch fgsm(const TrainedModel& model, const Matrix& x,
                             const std::vector<int>& y, const AttackConfig& config) {
  config.validate();
  const Matrix g = input_gradient(model, x, y);
  Matrix adv(x.rows(), x.cols());
  for (std::size_t k = 0; k < x.size(); ++k) {
    adv.mutable_data()[k] = detail::clip01(
        x.data()[k] + config.epsilon * detail::sign0(g.data()[k]));
  }
  AdversarialBatch batch{x, std::move(adv), y, model.descriptor.id, config};
  batch.validate();
  return batch;
}

// Iterated sign-gradient steps, each projected back onto the epsilon ball
// around x and clipped to [0,1]. Optional seeded uniform random start.
inline AdversarialBatch pgd(const TrainedModel& model, const Matrix& x,
                            const std::vector<int>& y, const AttackConfig& config) {
  config.validate();
  Matrix adv = x;
  if (config.random_start) {
    RngStream rng(config.seed);
    for (std::size_t k = 0; k < adv.size(); ++k) {
      adv.mutable_data()[k] = detail::clip01(
          x.data()[k] + rng.uniform(-config.epsilon, config.epsilon));
    }
  }
  for (std::size_t step = 0; step < config.steps; ++step) {
    const Matrix g = input_gradient(model, adv, y);
    for (std::size_t k = 0; k < adv.size(); ++k) {
      double v = adv.data()[k] + config.alpha * detail::sign0(g.data()[k]);
      const double lo = x.data()[k] - config.epsilon;
      const double hi = x.data()[k] + config.epsilon;
      v = std::clamp(v, lo, hi);  // epsilon-ball projection, every iterate
      adv.mutable_data()[k] = detail::clip01(v);
    }
  }
  AdversarialBatch batch{x, std::move(adv), y, model.descriptor.id, config};
  batch.validate();
  return batch;
}

inline AdversarialBatch run_attack(const TrainedModel& model, const Matrix& x,
                                   const std::vector<int>& y, const AttackConfig& config) {
  return config.kind == AttackKind::kFgsm ? fgsm(model, x, y, config)
                                          : pgd(model, x, y, config);
}

// Success of a batch against a (possibly different) model. The restricted
// rate counts flips only among examples the model classified correctly on
// the originals, so pre-existing errors are not credited to the attack; the
// unrestricted rate counts all label mismatches on the adversarials.
struct SuccessRates {
  double restricted = 0.0;
  double unrestricted = 0.0;
  std::size_t correct_originals = 0;
  std::size_t total = 0;
};

inline SuccessRates attack_success(const TrainedModel& model, const AdversarialBatch& batch) {
  batch.validate();
  const std::vector<int> pred_orig = predict(model, batch.originals);
  const std::vector<int> pred_adv = predict(model, batch.adversarials);

  SuccessRates rates;
  rates.total = batch.labels.size();
  std::size_t restricted_hits = 0, unrestricted_hits = 0;
  for (std::size_t i = 0; i < batch.labels.size(); ++i) {
    if (pred_adv[i] != batch.labels[i]) ++unrestricted_hits;
    if (pred_orig[i] == batch.labels[i]) {
      ++rates.correct_originals;
      if (pred_adv[i] != batch.labels[i]) ++restricted_hits;
    }
  }
  rates.unrestricted = static_cast<double>(unrestricted_hits) / static_cast<double>(rates.total);
  if (rates.correct_originals == 0)
    throw DegenerateInputError("no originally correct examples: restricted rate undefined");
  rates.restricted =
      static_cast<double>(restricted_hits) / static_cast<double>(rates.correct_originals);
  return rates;
}

// Manifest: per-example true label and the scoring model's predictions on
// original and adversarial inputs.
inline constexpr const char* kManifestCsvHeader = "index,label,orig_pred,adv_pred";

inline std::string adversarial_manifest_csv(const TrainedModel& model,
                                            const AdversarialBatch& batch) {
  const std::vector<int> pred_orig = predict(model, batch.originals);
  const std::vector<int> pred_adv = predict(model, batch.adversarials);
  std::string out = std::string(kManifestCsvHeader) + '\n';
  for (std::size_t i = 0; i < batch.labels.size(); ++i) {
    out += std::to_string(i) + ',' + std::to_string(batch.labels[i]) + ',' +
           std::to_string(pred_orig[i]) + ',' + std::to_string(pred_adv[i]) + '\n';
  }
  return out;
}

struct ManifestRow {
  std::size_t index = 0;
  int label = 0;
  int orig_pred = 0;
  int adv_pred = 0;
};

inline std::vector<ManifestRow> manifest_rows_from_csv(const std::string& text) {
  std::vector<ManifestRow> out;
  for (const std::vector<std::string>& f :
       io::parse_csv_table(text, kManifestCsvHeader, "attack manifest")) {
    ManifestRow r;
    r.index = io::parse_u64(f[0], "manifest index");
    r.label = static_cast<int>(io::parse_u64(f[1], "manifest label"));
    r.orig_pred = static_cast<int>(io::parse_u64(f[2], "manifest orig_pred"));
    r.adv_pred = static_cast<int>(io::parse_u64(f[3], "manifest adv_pred"));
    out.push_back(r);
  }
  return out;
}

}  // namespace tbrisk
