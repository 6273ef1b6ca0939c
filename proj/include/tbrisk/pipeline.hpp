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

#include <chrono>
#include <ctime>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tbrisk/activations.hpp"
#include "tbrisk/attacks.hpp"
#include "tbrisk/config.hpp"
#include "tbrisk/dataset.hpp"
#include "tbrisk/errors.hpp"
#include "tbrisk/model_io.hpp"
#include "tbrisk/riskeval.hpp"
#include "tbrisk/selection.hpp"
#include "tbrisk/similarity.hpp"

namespace tbrisk {

// Stage pipeline over on-disk artifacts. Every stage consumes only files the
// previous stages wrote (plus the run configuration), so stages can be rerun
// individually and a full run equals the stage composition by construction.

struct OutPaths {
  std::string root;

  explicit OutPaths(std::string r) : root(std::move(r)) {}

  std::string zoo_dir() const { return root + "/zoo"; }
  std::string model_file(const std::string& id) const {
    return zoo_dir() + "/" + id + ".trmz";
  }
  std::string zoo_csv() const { return zoo_dir() + "/zoo.csv"; }

  std::string activations_dir() const { return root + "/activations"; }
  std::string probes_amat() const { return activations_dir() + "/probes.amat"; }
  std::string activation_file(const std::string& id, std::size_t layer) const {
    return activations_dir() + "/" + id + ".L" + std::to_string(layer) + ".amat";
  }

  std::string similarity_csv() const { return root + "/similarity.csv"; }
  std::string pools_csv() const { return root + "/pools.csv"; }
  std::string pools_txt() const { return root + "/pools.txt"; }

  std::string attacks_dir() const { return root + "/attacks"; }
  std::string attack_orig(const std::string& id, const std::string& attack) const {
    return attacks_dir() + "/" + id + "." + attack + ".orig.amat";
  }
  std::string attack_adv(const std::string& id, const std::string& attack) const {
    return attacks_dir() + "/" + id + "." + attack + ".adv.amat";
  }
  std::string attack_manifest(const std::string& id, const std::string& attack) const {
    return attacks_dir() + "/" + id + "." + attack + ".manifest.csv";
  }

  std::string transfer_csv() const { return root + "/transfer.csv"; }
  std::string report_json_file() const { return root + "/report.json"; }
  std::string records_csv() const { return root + "/records.csv"; }
  std::string curve_csv_file() const { return root + "/curve.csv"; }
  std::string resolved_config() const { return root + "/run_config.resolved"; }
};

inline void require_artifact(const std::string& path, const std::string& stage,
                             const std::string& producer) {
  if (!std::filesystem::exists(path)) {
    throw DependencyError(stage + ": missing " + path + "; run `tbrisk " + producer +
                          "` first");
  }
}

// UTC wall clock, the single nondeterministic report field.
inline std::string now_utc_iso8601() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline Dataset pipeline_dataset(const RunConfig& cfg) {
  return generate_dataset(cfg.dataset_kind, cfg.dataset_size, cfg.dataset_classes,
                          cfg.dataset_seed_value());
}

inline ProbeSet pipeline_probe_set(const RunConfig& cfg, const Dataset& data) {
  return make_probe_set(data, cfg.probe_size, cfg.probe_seed_value());
}

// --- zoo manifest ------------------------------------------------------------

struct ZooEntry {
  std::string id;
  std::string role;  // target | surrogate
  std::string layers;
  std::size_t epochs = 0;
  double final_train_accuracy = 0.0;
  double final_test_accuracy = 0.0;
};

inline constexpr const char* kZooCsvHeader =
    "id,role,layers,epochs,final_train_accuracy,final_test_accuracy";

namespace detail {

// The layer list is comma-separated; inside a CSV cell the commas become
// pipes and are restored on load.
inline std::string swap_chars(std::string s, char from, char to) {
  for (char& c : s)
    if (c == from) c = to;
  return s;
}

}  // namespace detail

inline std::string zoo_csv(const std::vector<ZooEntry>& entries) {
  std::string out = std::string(kZooCsvHeader) + '\n';
  for (const ZooEntry& e : entries) {
    out += e.id + ',' + e.role + ',' + detail::swap_chars(e.layers, ',', '|') + ',' +
           std::to_string(e.epochs) + ',' + io::format_double(e.final_train_accuracy) +
           ',' + io::format_double(e.final_test_accuracy) + '\n';
  }
  return out;
}

inline std::vector<ZooEntry> zoo_entries_from_csv(const std::string& text) {
  std::vector<ZooEntry> out;
  for (const std::vector<std::string>& f :
       io::parse_csv_table(text, kZooCsvHeader, "zoo csv")) {
    ZooEntry e;
    e.id = f[0];
    e.role = f[1];
    e.layers = detail::swap_chars(f[2], '|', ',');
    e.epochs = io::parse_u64(f[3], "zoo epochs");
    e.final_train_accuracy = io::parse_double(f[4], "zoo train accuracy");
    e.final_test_accuracy = io::parse_double(f[5], "zoo test accuracy");
    out.push_back(std::move(e));
  }
  return out;
}

// --- stages ------------------------------------------------------------------

inline void stage_train_zoo(const RunConfig& cfg) {
  const OutPaths paths(cfg.out_dir);
  std::filesystem::create_directories(paths.zoo_dir());
  const Dataset data = pipeline_dataset(cfg);

  std::vector<ZooEntry> entries;
  for (const ModelConfig* m : cfg.model_list()) {
    const TrainedModel model = train(cfg.descriptor_for(*m), data, cfg.hyperparams_for(*m));
    save_model(model, paths.model_file(m->id));
    ZooEntry e;
    e.id = m->id;
    e.role = (m == &cfg.target) ? "target" : "surrogate";
    e.layers = m->layers;
    e.epochs = m->epochs;
    e.final_train_accuracy = model.meta.final_train_accuracy;
    e.final_test_accuracy = model.meta.final_test_accuracy;
    entries.push_back(std::move(e));
  }
  io::write_text(paths.zoo_csv(), zoo_csv(entries));
}

inline void stage_capture(const RunConfig& cfg) {
  const OutPaths paths(cfg.out_dir);
  for (const ModelConfig* m : cfg.model_list())
    require_artifact(paths.model_file(m->id), "capture", "train-zoo");
  std::filesystem::create_directories(paths.activations_dir());

  const Dataset data = pipeline_dataset(cfg);
  const ProbeSet probes = pipeline_probe_set(cfg, data);
  ActivationMatrix probe_mat{"dataset", 0, probes.id, probes.inputs};
  save_amat(probe_mat, paths.probes_amat());

  for (const ModelConfig* m : cfg.model_list()) {
    const TrainedModel model = load_model(paths.model_file(m->id));
    for (const ActivationMatrix& act : capture(model, probes))
      save_amat(act, paths.activation_file(m->id, act.layer_index));
  }
}

namespace detail {

inline std::vector<ActivationMatrix> load_captured(const OutPaths& paths,
                                                   const TrainedModel& model,
                                                   const std::string& stage) {
  std::vector<ActivationMatrix> acts;
  for (std::size_t li : capturable_layers(model.descriptor)) {
    const std::string path = paths.activation_file(model.descriptor.id, li);
    require_artifact(path, stage, "capture");
    acts.push_back(load_amat(path));
  }
  return acts;
}

}  // namespace detail

inline void stage_similarity(const RunConfig& cfg) {
  const OutPaths paths(cfg.out_dir);
  require_artifact(paths.model_file(cfg.target.id), "similarity", "train-zoo");
  const TrainedModel target = load_model(paths.model_file(cfg.target.id));
  const std::vector<ActivationMatrix> acts_target =
      detail::load_captured(paths, target, "similarity");

  std::vector<SimilarityRecord> records;
  for (const ModelConfig& s : cfg.surrogates) {
    require_artifact(paths.model_file(s.id), "similarity", "train-zoo");
    const TrainedModel surrogate = load_model(paths.model_file(s.id));
    const std::vector<ActivationMatrix> acts_s =
        detail::load_captured(paths, surrogate, "similarity");
    const LayerSimilarityMatrix lm =
        layer_matrix(acts_target, acts_s, cfg.kernel_spec(), HsicEstimator::kBiased);
    records.push_back(aggregate_score(lm, cfg.scope, cfg.band_width));
  }
  io::write_text(paths.similarity_csv(), similarity_csv(records));
}

inline SurrogatePools stage_select(const RunConfig& cfg) {
  const OutPaths paths(cfg.out_dir);
  require_artifact(paths.similarity_csv(), "select", "similarity");
  const std::vector<SimilarityRecord> records =
      similarity_records_from_csv(io::read_text(paths.similarity_csv()));
  const SurrogatePools pools = select_pools(records, cfg.policy);
  io::write_text(paths.pools_csv(), pools_csv(pools));
  io::write_text(paths.pools_txt(), pools_text(pools));
  return pools;
}

namespace detail {

inline std::vector<ScoredSurrogate> selected_surrogates(const SurrogatePools& pools) {
  std::vector<ScoredSurrogate> out = pools.m1;
  out.insert(out.end(), pools.m2.begin(), pools.m2.end());
  return out;
}

}  // namespace detail

inline void stage_attack(const RunConfig& cfg) {
  const OutPaths paths(cfg.out_dir);
  require_artifact(paths.pools_csv(), "attack", "select");
  const SurrogatePools pools =
      pools_from_csv(io::read_text(paths.pools_csv()), cfg.target.id, cfg.policy);
  std::filesystem::create_directories(paths.attacks_dir());

  const Dataset data = pipeline_dataset(cfg);
  const std::vector<std::size_t> eval_idx = data.indices_of(Split::kTest);
  const Matrix eval_x = data.rows_at(eval_idx);
  const std::vector<int> eval_y = data.labels_at(eval_idx);

  for (const ScoredSurrogate& s : detail::selected_surrogates(pools)) {
    require_artifact(paths.model_file(s.id), "attack", "train-zoo");
    const TrainedModel model = load_model(paths.model_file(s.id));
    for (const NamedAttack& a : cfg.attacks) {
      AttackConfig ac = a.config;
      ac.seed = cfg.stage_seed("attack", s.id + "/" + a.name);
      const AdversarialBatch batch = run_attack(model, eval_x, eval_y, ac);
      save_amat(ActivationMatrix{s.id, 0, "attack-" + a.name + "-orig", batch.originals},
                paths.attack_orig(s.id, a.name));
      save_amat(ActivationMatrix{s.id, 0, "attack-" + a.name + "-adv", batch.adversarials},
                paths.attack_adv(s.id, a.name));
      io::write_text(paths.attack_manifest(s.id, a.name),
                     adversarial_manifest_csv(model, batch));
    }
  }
}

inline std::vector<TransferRecord> stage_evaluate(const RunConfig& cfg) {
  const OutPaths paths(cfg.out_dir);
  require_artifact(paths.pools_csv(), "evaluate", "select");
  require_artifact(paths.similarity_csv(), "evaluate", "similarity");
  require_artifact(paths.model_file(cfg.target.id), "evaluate", "train-zoo");

  const SurrogatePools pools =
      pools_from_csv(io::read_text(paths.pools_csv()), cfg.target.id, cfg.policy);
  std::map<std::string, double> similarity;
  for (const SimilarityRecord& r :
       similarity_records_from_csv(io::read_text(paths.similarity_csv())))
    similarity[r.model_b] = r.score;

  const TrainedModel target = load_model(paths.model_file(cfg.target.id));
  const Dataset data = pipeline_dataset(cfg);
  const std::vector<int> eval_y = data.labels_at(data.indices_of(Split::kTest));

  std::vector<TransferRecord> records;
  auto eval_pool = [&](const std::vector<ScoredSurrogate>& pool, const char* tag) {
    for (const ScoredSurrogate& s : pool) {
      require_artifact(paths.model_file(s.id), "evaluate", "train-zoo");
      const TrainedModel surrogate = load_model(paths.model_file(s.id));
      auto sim = similarity.find(s.id);
      if (sim == similarity.end())
        throw DependencyError("evaluate: " + paths.similarity_csv() +
                              " has no row for surrogate '" + s.id + "'");
      for (const NamedAttack& a : cfg.attacks) {
        require_artifact(paths.attack_orig(s.id, a.name), "evaluate", "attack");
        require_artifact(paths.attack_adv(s.id, a.name), "evaluate", "attack");
        AdversarialBatch batch;
        batch.originals = load_amat(paths.attack_orig(s.id, a.name)).data;
        batch.adversarials = load_amat(paths.attack_adv(s.id, a.name)).data;
        batch.labels = eval_y;
        batch.source_model_id = s.id;
        batch.config = a.config;
        batch.config.seed = cfg.stage_seed("attack", s.id + "/" + a.name);

        TransferRecord rec;
        rec.surrogate_id = s.id;
        rec.config = batch.config;
        rec.n = eval_y.size();
        rec.surrogate_restricted = attack_success(surrogate, batch).restricted;
        const SuccessRates on_target = attack_success(target, batch);
        rec.target_restricted = on_target.restricted;
        rec.target_unrestricted = on_target.unrestricted;
        rec.similarity = sim->second;
        rec.pool = tag;
        rec.validate();
        records.push_back(std::move(rec));
      }
    }
  };
  eval_pool(pools.m1, "m1");
  eval_pool(pools.m2, "m2");

  io::write_text(paths.transfer_csv(), transfer_records_csv(records));
  return records;
}

inline RiskReport stage_report(const RunConfig& cfg, const std::string& generated_at) {
  const OutPaths paths(cfg.out_dir);
  require_artifact(paths.transfer_csv(), "report", "evaluate");
  require_artifact(paths.pools_csv(), "report", "select");

  const std::vector<TransferRecord> records =
      transfer_records_from_csv(io::read_text(paths.transfer_csv()));
  const SurrogatePools pools =
      pools_from_csv(io::read_text(paths.pools_csv()), cfg.target.id, cfg.policy);

  std::vector<AttackConfig> attacks;
  for (const NamedAttack& a : cfg.attacks) attacks.push_back(a.config);

  ReportMetadata meta;
  meta.master_seed = cfg.master_seed;
  meta.dataset = to_string(cfg.dataset_kind) + "-n" + std::to_string(cfg.dataset_size) +
                 "-c" + std::to_string(cfg.dataset_classes);
  meta.probe_set_id = cfg.probe_set_id();
  meta.zoo_description = "target '" + cfg.target.id + "' with " +
                         std::to_string(cfg.surrogates.size()) + " candidate surrogates";
  meta.generated_at = generated_at;

  const RiskReport report =
      build_report(pools, records, attacks, cfg.link, meta,
                   cfg.stage_seed("bootstrap", "report"), cfg.bootstrap_trials);
  io::write_text(paths.report_json_file(), report_json(report));
  io::write_text(paths.records_csv(), transfer_records_csv(report.records));
  io::write_text(paths.curve_csv_file(), curve_csv(report));
  return report;
}

// Full run: validates first (bad thresholds must fail before any training),
// then executes every stage in order against the same output directory.
inline RiskReport run_pipeline(const RunConfig& cfg, std::string generated_at = "") {
  cfg.validate();
  if (generated_at.empty()) generated_at = now_utc_iso8601();
  const OutPaths paths(cfg.out_dir);
  std::filesystem::create_directories(paths.root);
  io::write_text(paths.resolved_config(), render_run_config(cfg));

  stage_train_zoo(cfg);
  stage_capture(cfg);
  stage_similarity(cfg);
  stage_select(cfg);
  stage_attack(cfg);
  stage_evaluate(cfg);
  return stage_report(cfg, generated_at);
}

}  // namespace tbrisk
