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
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tbrisk/attacks.hpp"
#include "tbrisk/dataset.hpp"
#include "tbrisk/errors.hpp"
#include "tbrisk/io_util.hpp"
#include "tbrisk/model_io.hpp"
#include "tbrisk/riskeval.hpp"
#include "tbrisk/selection.hpp"
#include "tbrisk/similarity.hpp"

namespace tbrisk {

// Run configuration: a single flat key=value text file drives the whole
// pipeline, so a run is reproducible from one auditable artifact. Every
// stage seed derives from the master seed via derive_seed(master, stage,
// entity); adding a surrogate never perturbs another model's randomness.

struct ModelConfig {
  std::string id;
  std::string layers;  // layer list, e.g. "dense:16,relu,dense:2"
  std::string input;   // optional input shape like "1x8x8"; empty = flat
  std::size_t epochs = 30;
  double learning_rate = 0.1;
  std::size_t batch_size = 32;
  double subsample = 1.0;
};

struct NamedAttack {
  std::string name;
  AttackConfig config;
};

inline AggregateMode aggregate_mode_from_string(const std::string& s) {
  if (s == "mean_diag_band") return AggregateMode::kMeanDiagBand;
  if (s == "mean_all") return AggregateMode::kMeanAll;
  if (s == "final_layer") return AggregateMode::kFinalLayer;
  throw ConfigError("unknown similarity scope '" + s + "'");
}

inline KernelKind kernel_kind_from_string(const std::string& s) {
  if (s == "linear") return KernelKind::kLinear;
  if (s == "rbf") return KernelKind::kRbf;
  throw ConfigError("unknown similarity kernel '" + s + "'");
}

inline std::string to_string(KernelKind k) {
  return k == KernelKind::kLinear ? "linear" : "rbf";
}

// Feature count each dataset kind produces, known without generating it.
inline std::size_t dataset_input_dim(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::kBlobs: return DatasetOptions{}.blobs_dim;
    case DatasetKind::kMoons: return 2;
    case DatasetKind::kDigits8x8: return 64;
  }
  throw ConfigError("unknown dataset kind");
}

struct RunConfig {
  std::uint64_t master_seed = 42;
  std::string out_dir = "tbrisk-out";

  DatasetKind dataset_kind = DatasetKind::kBlobs;
  std::size_t dataset_size = 400;
  std::size_t dataset_classes = 2;
  std::optional<std::uint64_t> dataset_seed;  // default: derived from master

  ModelConfig target;
  std::vector<ModelConfig> surrogates;

  std::size_t probe_size = 100;
  std::optional<std::uint64_t> probe_seed;  // default: derived from master

  KernelKind kernel = KernelKind::kLinear;
  std::optional<double> bandwidth;  // rbf only; empty = median heuristic
  AggregateMode scope = AggregateMode::kMeanDiagBand;
  double band_width = 0.25;

  ThresholdPolicy policy;  // method is always derived, never a config key

  std::vector<NamedAttack> attacks;

  LinkKind link = LinkKind::kLogit;
  std::size_t bootstrap_trials = 1000;

  KernelSpec kernel_spec() const {
    KernelSpec k;
    k.kind = kernel;
    k.bandwidth = bandwidth;
    return k;
  }

  // Label the selection method the similarity stage will emit.
  std::string method_label() const {
    return scope == AggregateMode::kMeanDiagBand ? "diag_band"
                                                 : kernel_spec().method_label();
  }

  std::uint64_t stage_seed(const std::string& stage, const std::string& entity) const {
    return derive_seed(master_seed, stage, entity);
  }

  std::uint64_t dataset_seed_value() const {
    return dataset_seed ? *dataset_seed : stage_seed("dataset", to_string(dataset_kind));
  }

  std::uint64_t probe_seed_value() const {
    return probe_seed ? *probe_seed : stage_seed("probe", to_string(dataset_kind));
  }

  // Matches the default id make_probe_set assigns for this configuration.
  std::string probe_set_id() const {
    return to_string(dataset_kind) + "-p" + std::to_string(probe_size) + "-s" +
           std::to_string(probe_seed_value());
  }

  NetworkDescriptor descriptor_for(const ModelConfig& m) const {
    NetworkDescriptor d;
    d.id = m.id;
    const std::size_t dim = dataset_input_dim(dataset_kind);
    if (m.input.empty()) {
      d.input_shape = {dim};
    } else {
      d.input_shape = detail::shape_from_text(m.input);
      if (shape_size(d.input_shape) != dim) {
        throw ConfigError("model '" + m.id + "' input shape " + m.input + " has " +
                          std::to_string(shape_size(d.input_shape)) +
                          " features, dataset provides " + std::to_string(dim));
      }
    }
    d.class_count = dataset_classes;
    d.init_seed = stage_seed("init", m.id);
    d.layers = detail::layers_from_text(m.layers);
    return d;
  }

  Hyperparams hyperparams_for(const ModelConfig& m) const {
    Hyperparams hp;
    hp.epochs = m.epochs;
    hp.learning_rate = m.learning_rate;
    hp.batch_size = m.batch_size;
    hp.seed = stage_seed("train", m.id);
    hp.subsample_fraction = m.subsample;
    return hp;
  }

  // Target first, then surrogates in declaration order.
  std::vector<const ModelConfig*> model_list() const {
    std::vector<const ModelConfig*> out{&target};
    for (const ModelConfig& s : surrogates) out.push_back(&s);
    return out;
  }

  void validate() const;
};

namespace detail {

// Ids end up in file names; keep them portable.
inline void require_portable_id(const std::string& id, const std::string& what) {
  if (id.empty()) throw ConfigError(what + " must not be empty");
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '-' || c == '_';
    if (!ok)
      throw ConfigError(what + " '" + id + "' may only use letters, digits, '-', '_'");
  }
}

}  // namespace detail

inline void RunConfig::validate() const {
  if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
  detail::require_portable_id(target.id, "target id");
  if (surrogates.empty()) throw ConfigError("at least one surrogate is required");
  std::set<std::string> ids{target.id};
  for (const ModelConfig& s : surrogates) {
    detail::require_portable_id(s.id, "surrogate id");
    if (!ids.insert(s.id).second)
      throw ConfigError("duplicate model id '" + s.id + "'");
  }

  // Architectures must be buildable before any training starts.
  for (const ModelConfig* m : model_list()) {
    if (m->layers.empty())
      throw ConfigError("model '" + m->id + "' needs a layers entry");
    descriptor_for(*m).layer_output_shapes();
    if (m->epochs < 1) throw ConfigError("model '" + m->id + "' needs epochs >= 1");
    if (!(m->subsample > 0.0 && m->subsample <= 1.0))
      throw ConfigError("model '" + m->id + "' subsample must be in (0,1]");
  }

  if (probe_size < kMinProbeSize)
    throw ConfigError("probe size " + std::to_string(probe_size) + " below minimum " +
                      std::to_string(kMinProbeSize));
  if (kernel == KernelKind::kLinear && bandwidth.has_value())
    throw ConfigError("similarity.bandwidth only applies to the rbf kernel");
  if (band_width < 0.0) throw ConfigError("similarity.band_width must be >= 0");

  policy.validate();
  if (policy.method != method_label())
    throw ConfigError("policy method '" + policy.method +
                      "' does not match the similarity configuration '" +
                      method_label() + "'");

  if (attacks.empty()) throw ConfigError("at least one attack is required");
  std::set<std::string> names;
  for (const NamedAttack& a : attacks) {
    detail::require_portable_id(a.name, "attack name");
    if (!names.insert(a.name).second)
      throw ConfigError("duplicate attack name '" + a.name + "'");
    a.config.validate();
  }

  if (bootstrap_trials < 100)
    throw ConfigError("bootstrap.trials must be >= 100");
}

// --- flat key=value text form -----------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return s.substr(b, e - b);
}

inline bool parse_bool(const std::string& v, const std::string& what) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError(what + " must be 'true' or 'false', got '" + v + "'");
}

// Key=value lines, '#' comment lines, duplicate keys rejected.
inline std::map<std::string, std::string> parse_kv_lines(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::size_t pos = 0, line_no = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string raw =
        text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = (nl == std::string::npos) ? text.size() + 1 : nl + 1;
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) +
                        " is not a key=value pair: '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(line_no) + " has an empty key");
    if (value.empty())
      throw ConfigError("config key '" + key + "' has an empty value");
    if (!kv.emplace(key, value).second)
      throw ConfigError("duplicate config key '" + key + "'");
  }
  return kv;
}

inline std::vector<std::string> parse_id_list(const std::string& value,
                                              const std::string& what) {
  std::vector<std::string> out;
  for (const std::string& part : split_on(value, ',')) {
    const std::string id = trim(part);
    if (id.empty()) throw ConfigError(what + " contains an empty entry");
    out.push_back(id);
  }
  return out;
}

}  // namespace detail

inline RunConfig parse_run_config(const std::string& text) {
  std::map<std::string, std::string> kv = detail::parse_kv_lines(text);
  RunConfig cfg;

  auto take = [&kv](const std::string& key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  auto require = [&take](const std::string& key) {
    std::optional<std::string> v = take(key);
    if (!v) throw ConfigError("missing required config key '" + key + "'");
    return *v;
  };
  auto take_u64 = [&take](const std::string& key, std::uint64_t fallback) {
    std::optional<std::string> v = take(key);
    return v ? io::parse_u64(*v, key) : fallback;
  };
  auto take_double = [&take](const std::string& key, double fallback) {
    std::optional<std::string> v = take(key);
    return v ? io::parse_double(*v, key) : fallback;
  };

  cfg.master_seed = take_u64("master_seed", cfg.master_seed);
  if (std::optional<std::string> v = take("out_dir")) cfg.out_dir = *v;

  cfg.dataset_kind = dataset_kind_from_string(require("dataset.kind"));
  cfg.dataset_size = take_u64("dataset.size", cfg.dataset_size);
  cfg.dataset_classes = take_u64("dataset.classes", cfg.dataset_classes);
  if (std::optional<std::string> v = take("dataset.seed"))
    cfg.dataset_seed = io::parse_u64(*v, "dataset.seed");

  auto read_model = [&](const std::string& prefix, const std::string& id) {
    ModelConfig m;
    m.id = id;
    if (std::optional<std::string> v = take(prefix + ".layers")) m.layers = *v;
    if (std::optional<std::string> v = take(prefix + ".input")) m.input = *v;
    m.epochs = take_u64(prefix + ".epochs", m.epochs);
    m.learning_rate = take_double(prefix + ".learning_rate", m.learning_rate);
    m.batch_size = take_u64(prefix + ".batch_size", m.batch_size);
    m.subsample = take_double(prefix + ".subsample", m.subsample);
    return m;
  };

  std::string target_id = "target";
  if (std::optional<std::string> v = take("target.id")) target_id = *v;
  cfg.target = read_model("target", target_id);

  for (const std::string& id : detail::parse_id_list(require("surrogates"), "surrogates"))
    cfg.surrogates.push_back(read_model("surrogate." + id, id));

  cfg.probe_size = take_u64("probe.size", cfg.probe_size);
  if (std::optional<std::string> v = take("probe.seed"))
    cfg.probe_seed = io::parse_u64(*v, "probe.seed");

  if (std::optional<std::string> v = take("similarity.kernel"))
    cfg.kernel = kernel_kind_from_string(*v);
  if (std::optional<std::string> v = take("similarity.bandwidth"))
    cfg.bandwidth = io::parse_double(*v, "similarity.bandwidth");
  if (std::optional<std::string> v = take("similarity.scope"))
    cfg.scope = aggregate_mode_from_string(*v);
  cfg.band_width = take_double("similarity.band_width", cfg.band_width);

  cfg.policy.r1 = take_double("policy.r1", cfg.policy.r1);
  cfg.policy.r2 = take_double("policy.r2", cfg.policy.r2);
  cfg.policy.min_m1 = take_u64("policy.min_m1", cfg.policy.min_m1);
  cfg.policy.min_m2 = take_u64("policy.min_m2", cfg.policy.min_m2);
  cfg.policy.min_total = take_u64("policy.min_total", cfg.policy.min_total);
  cfg.policy.recommended_total =
      take_u64("policy.recommended_total", cfg.policy.recommended_total);
  cfg.policy.method = cfg.method_label();

  for (const std::string& name : detail::parse_id_list(require("attacks"), "attacks")) {
    NamedAttack a;
    a.name = name;
    const std::string prefix = "attack." + name;
    std::optional<std::string> kind = take(prefix + ".kind");
    a.config.kind = attack_kind_from_string(kind ? *kind : name);
    a.config.epsilon = take_double(prefix + ".epsilon", a.config.epsilon);
    a.config.alpha = take_double(prefix + ".alpha", a.config.alpha);
    a.config.steps = take_u64(prefix + ".steps", a.config.steps);
    if (std::optional<std::string> v = take(prefix + ".random_start"))
      a.config.random_start = detail::parse_bool(*v, prefix + ".random_start");
    cfg.attacks.push_back(a);
  }

  if (std::optional<std::string> v = take("regression.link"))
    cfg.link = link_from_string(*v);
  cfg.bootstrap_trials = take_u64("bootstrap.trials", cfg.bootstrap_trials);

  if (!kv.empty())
    throw ConfigError("unknown config key '" + kv.begin()->first + "'");
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  return parse_run_config(io::read_text(path));
}

// Canonical rendering: parse(render(cfg)) reproduces cfg, and render is the
// resolved-config artifact a run writes next to its outputs.
inline std::string render_run_config(const RunConfig& cfg) {
  std::string out;
  auto put = [&out](const std::string& key, const std::string& value) {
    out += key + " = " + value + "\n";
  };
  put("master_seed", std::to_string(cfg.master_seed));
  put("out_dir", cfg.out_dir);
  put("dataset.kind", to_string(cfg.dataset_kind));
  put("dataset.size", std::to_string(cfg.dataset_size));
  put("dataset.classes", std::to_string(cfg.dataset_classes));
  if (cfg.dataset_seed) put("dataset.seed", std::to_string(*cfg.dataset_seed));

  auto put_model = [&](const std::string& prefix, const ModelConfig& m) {
    put(prefix + ".layers", m.layers);
    if (!m.input.empty()) put(prefix + ".input", m.input);
    put(prefix + ".epochs", std::to_string(m.epochs));
    put(prefix + ".learning_rate", io::format_double(m.learning_rate));
    put(prefix + ".batch_size", std::to_string(m.batch_size));
    put(prefix + ".subsample", io::format_double(m.subsample));
  };
  put("target.id", cfg.target.id);
  put_model("target", cfg.target);

  std::string ids;
  for (const ModelConfig& s : cfg.surrogates)
    ids += (ids.empty() ? "" : ",") + s.id;
  put("surrogates", ids);
  for (const ModelConfig& s : cfg.surrogates) put_model("surrogate." + s.id, s);

  put("probe.size", std::to_string(cfg.probe_size));
  if (cfg.probe_seed) put("probe.seed", std::to_string(*cfg.probe_seed));

  put("similarity.kernel", to_string(cfg.kernel));
  if (cfg.bandwidth) put("similarity.bandwidth", io::format_double(*cfg.bandwidth));
  put("similarity.scope", to_string(cfg.scope));
  put("similarity.band_width", io::format_double(cfg.band_width));

  put("policy.r1", io::format_double(cfg.policy.r1));
  put("policy.r2", io::format_double(cfg.policy.r2));
  put("policy.min_m1", std::to_string(cfg.policy.min_m1));
  put("policy.min_m2", std::to_string(cfg.policy.min_m2));
  put("policy.min_total", std::to_string(cfg.policy.min_total));
  put("policy.recommended_total", std::to_string(cfg.policy.recommended_total));

  std::string names;
  for (const NamedAttack& a : cfg.attacks)
    names += (names.empty() ? "" : ",") + a.name;
  put("attacks", names);
  for (const NamedAttack& a : cfg.attacks) {
    const std::string prefix = "attack." + a.name;
    put(prefix + ".kind", to_string(a.config.kind));
    put(prefix + ".epsilon", io::format_double(a.config.epsilon));
    if (a.config.kind == AttackKind::kPgd) {
      put(prefix + ".alpha", io::format_double(a.config.alpha));
      put(prefix + ".steps", std::to_string(a.config.steps));
      put(prefix + ".random_start", a.config.random_start ? "true" : "false");
    }
  }

  put("regression.link", to_string(cfg.link));
  put("bootstrap.trials", std::to_string(cfg.bootstrap_trials));
  return out;
}

}  // namespace tbrisk
