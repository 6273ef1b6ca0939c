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

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tbrisk/pipeline.hpp"

namespace {

using namespace tbrisk;

// Flag overrides applied on top of the loaded config file, in the order the
// flags are documented: seed, output directory, thresholds, attack filter,
// epsilon. Overrides precede validation so inconsistencies still abort.
struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<double> r1;
  std::optional<double> r2;
  std::optional<std::string> attack;
  std::optional<double> eps;
};

RunConfig resolve_config(const Overrides& o) {
  RunConfig cfg = load_run_config(o.config_path);
  if (o.seed) cfg.master_seed = *o.seed;
  if (o.out) cfg.out_dir = *o.out;
  if (o.r1) cfg.policy.r1 = *o.r1;
  if (o.r2) cfg.policy.r2 = *o.r2;
  if (o.attack) {
    std::vector<NamedAttack> kept;
    for (const NamedAttack& a : cfg.attacks)
      if (a.name == *o.attack) kept.push_back(a);
    if (kept.empty())
      throw ConfigError("no attack named '" + *o.attack + "' in " + o.config_path);
    cfg.attacks = std::move(kept);
  }
  if (o.eps)
    for (NamedAttack& a : cfg.attacks) a.config.epsilon = *o.eps;
  cfg.validate();
  return cfg;
}

// Exit codes: 0 success, 2 config error, 3 insufficient pools, 4 numerical
// failure, 5 missing dependency, 1 anything unexpected.
int exit_code_for(const Error& e) {
  if (dynamic_cast<const InsufficientPoolError*>(&e)) return 3;
  if (dynamic_cast<const DependencyError*>(&e)) return 5;
  if (dynamic_cast<const NumericalError*>(&e) ||
      dynamic_cast<const TrainingError*>(&e) ||
      dynamic_cast<const DegenerateInputError*>(&e))
    return 4;
  return 2;
}

void print_report_summary(const RiskReport& r) {
  std::set<std::string> m1, m2;
  for (const TransferRecord& rec : r.records)
    (rec.pool == "m1" ? m1 : m2).insert(rec.surrogate_id);
  std::cout << "pools: m1=" << m1.size() << " m2=" << m2.size() << "\n"
            << "regression (" << to_string(r.regression.link)
            << "): intercept=" << io::format_double(r.regression.intercept)
            << " slope=" << io::format_double(r.regression.slope) << " ci90=["
            << io::format_double(r.ci_slope.lo) << ", "
            << io::format_double(r.ci_slope.hi) << "]\n"
            << "worst_case=" << io::format_double(r.aggregates.worst_case)
            << " mean_m1=" << io::format_double(r.aggregates.mean_m1)
            << " mean_m2=" << io::format_double(r.aggregates.mean_m2)
            << " predicted_at_r1=" << io::format_double(r.aggregates.predicted_at_r1)
            << "\n";
}

// `similarity --a x.amat --b y.amat`: score one saved pair, print one CSV row.
int pairwise_similarity(const std::string& a_path, const std::string& b_path,
                        const std::string& kernel_name,
                        const std::optional<double>& bandwidth) {
  KernelSpec spec;
  spec.kind = kernel_kind_from_string(kernel_name);
  spec.bandwidth = bandwidth;
  const SimilarityRecord rec = cka(load_amat(a_path), load_amat(b_path), spec);
  std::cout << similarity_csv({rec});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tbrisk: transferred black-box attack risk evaluation"};
  app.require_subcommand(1);

  Overrides o;
  std::string amat_a, amat_b, pair_kernel = "linear";
  std::optional<double> pair_bandwidth;

  auto add_common = [&o](CLI::App* sub, bool config_required) {
    CLI::Option* cfg = sub->add_option("--config", o.config_path,
                                       "run configuration file (key = value lines)");
    if (config_required) cfg->required();
    sub->add_option("--seed", o.seed, "override master_seed");
    sub->add_option("--out", o.out, "override out_dir");
    sub->add_option("--r1", o.r1, "override policy.r1 (high-similarity threshold)");
    sub->add_option("--r2", o.r2, "override policy.r2 (low-similarity threshold)");
    sub->add_option("--attack", o.attack, "keep only the attack with this name");
    sub->add_option("--eps", o.eps, "override epsilon for all kept attacks");
    return cfg;
  };

  CLI::App* run = app.add_subcommand("run", "execute every stage in order");
  add_common(run, true);
  CLI::App* train_zoo = app.add_subcommand("train-zoo", "train and save all models");
  add_common(train_zoo, true);
  CLI::App* cap = app.add_subcommand("capture", "record activations on the probe set");
  add_common(cap, true);

  CLI::App* sim = app.add_subcommand(
      "similarity", "score surrogates against the target (or one saved pair)");
  CLI::Option* sim_cfg = add_common(sim, false);
  CLI::Option* opt_a =
      sim->add_option("--a", amat_a, "first activation matrix (.amat)");
  CLI::Option* opt_b =
      sim->add_option("--b", amat_b, "second activation matrix (.amat)");
  opt_a->needs(opt_b)->excludes(sim_cfg);
  opt_b->needs(opt_a);
  sim->add_option("--kernel", pair_kernel, "pair mode kernel: linear | rbf");
  sim->add_option("--bandwidth", pair_bandwidth, "pair mode rbf bandwidth");

  CLI::App* select = app.add_subcommand("select", "partition surrogates into pools");
  add_common(select, true);
  CLI::App* attack = app.add_subcommand("attack", "craft adversarial batches");
  add_common(attack, true);
  CLI::App* evaluate = app.add_subcommand("evaluate", "replay attacks on the target");
  add_common(evaluate, true);
  CLI::App* report = app.add_subcommand("report", "aggregate transfer records");
  add_common(report, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    if (sim->parsed() && !amat_a.empty())
      return pairwise_similarity(amat_a, amat_b, pair_kernel, pair_bandwidth);
    if (sim->parsed() && o.config_path.empty())
      throw ConfigError("similarity needs --config, or --a and --b for one pair");

    const RunConfig cfg = resolve_config(o);
    const OutPaths paths(cfg.out_dir);
    // Every command records the configuration it actually ran with (flag
    // overrides applied), so stage composition matches a full run file for
    // file and partial reruns stay auditable.
    std::filesystem::create_directories(paths.root);
    io::write_text(paths.resolved_config(), render_run_config(cfg));
    if (run->parsed()) {
      const RiskReport rep = run_pipeline(cfg);
      std::cout << "wrote " << paths.report_json_file() << "\n";
      print_report_summary(rep);
    } else if (train_zoo->parsed()) {
      stage_train_zoo(cfg);
      std::cout << "wrote " << paths.zoo_csv() << " ("
                << 1 + cfg.surrogates.size() << " models)\n";
    } else if (cap->parsed()) {
      stage_capture(cfg);
      std::cout << "wrote " << paths.activations_dir() << "/\n";
    } else if (sim->parsed()) {
      stage_similarity(cfg);
      std::cout << "wrote " << paths.similarity_csv() << "\n";
    } else if (select->parsed()) {
      const SurrogatePools pools = stage_select(cfg);
      std::cout << "wrote " << paths.pools_csv() << " (m1=" << pools.m1.size()
                << " m2=" << pools.m2.size() << " excluded=" << pools.excluded.size()
                << ")\n";
    } else if (attack->parsed()) {
      stage_attack(cfg);
      std::cout << "wrote " << paths.attacks_dir() << "/\n";
    } else if (evaluate->parsed()) {
      const std::vector<TransferRecord> records = stage_evaluate(cfg);
      std::cout << "wrote " << paths.transfer_csv() << " (" << records.size()
                << " records)\n";
    } else if (report->parsed()) {
      const RiskReport rep = stage_report(cfg, now_utc_iso8601());
      std::cout << "wrote " << paths.report_json_file() << "\n";
      print_report_summary(rep);
    }
  } catch (const Error& e) {
    std::cerr << "tbrisk " << command << ": " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "tbrisk " << command << ": unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
