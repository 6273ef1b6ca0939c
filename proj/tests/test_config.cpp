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

#include <string>

#include "catch2/catch_amalgamated.hpp"
#include "tbrisk/config.hpp"
#include "tbrisk/rng.hpp"

using namespace tbrisk;

namespace {

// Smallest config that parses: required keys plus one buildable model each.
const char* kMinimalText =
    "dataset.kind = blobs\n"
    "target.layers = dense:4,relu,dense:2\n"
    "surrogates = s1\n"
    "surrogate.s1.layers = dense:3,relu,dense:2\n"
    "attacks = fgsm\n";

RunConfig minimal() { return parse_run_config(kMinimalText); }

}  // namespace

TEST_CASE("minimal config takes documented defaults") {
  const RunConfig cfg = minimal();
  CHECK(cfg.master_seed == 42);
  CHECK(cfg.out_dir == "tbrisk-out");
  CHECK(cfg.dataset_kind == DatasetKind::kBlobs);
  CHECK(cfg.dataset_size == 400);
  CHECK(cfg.dataset_classes == 2);
  CHECK_FALSE(cfg.dataset_seed.has_value());
  CHECK(cfg.target.id == "target");
  CHECK(cfg.target.epochs == 30);
  CHECK(cfg.target.learning_rate == 0.1);
  CHECK(cfg.target.batch_size == 32);
  CHECK(cfg.target.subsample == 1.0);
  REQUIRE(cfg.surrogates.size() == 1);
  CHECK(cfg.surrogates[0].id == "s1");
  CHECK(cfg.probe_size == 100);
  CHECK(cfg.kernel == KernelKind::kLinear);
  CHECK_FALSE(cfg.bandwidth.has_value());
  CHECK(cfg.scope == AggregateMode::kMeanDiagBand);
  CHECK(cfg.band_width == 0.25);
  CHECK(cfg.policy.r1 == 0.55);
  CHECK(cfg.policy.r2 == 0.35);
  CHECK(cfg.policy.method == "diag_band");
  REQUIRE(cfg.attacks.size() == 1);
  CHECK(cfg.attacks[0].name == "fgsm");
  CHECK(cfg.attacks[0].config.kind == AttackKind::kFgsm);
  CHECK(cfg.link == LinkKind::kLogit);
  CHECK(cfg.bootstrap_trials == 1000);
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("attack kind defaults to the attack name and can be overridden") {
  RunConfig cfg = parse_run_config(
      "dataset.kind = blobs\n"
      "target.layers = dense:4,relu,dense:2\n"
      "surrogates = s1\n"
      "surrogate.s1.layers = dense:3,relu,dense:2\n"
      "attacks = pgd,strong\n"
      "attack.pgd.steps = 7\n"
      "attack.strong.kind = pgd\n"
      "attack.strong.epsilon = 0.3\n"
      "attack.strong.alpha = 0.05\n"
      "attack.strong.steps = 40\n"
      "attack.strong.random_start = true\n");
  REQUIRE(cfg.attacks.size() == 2);
  CHECK(cfg.attacks[0].name == "pgd");
  CHECK(cfg.attacks[0].config.kind == AttackKind::kPgd);
  CHECK(cfg.attacks[0].config.steps == 7);
  CHECK_FALSE(cfg.attacks[0].config.random_start);
  CHECK(cfg.attacks[1].name == "strong");
  CHECK(cfg.attacks[1].config.kind == AttackKind::kPgd);
  CHECK(cfg.attacks[1].config.epsilon == 0.3);
  CHECK(cfg.attacks[1].config.alpha == 0.05);
  CHECK(cfg.attacks[1].config.steps == 40);
  CHECK(cfg.attacks[1].config.random_start);
}

TEST_CASE("render and parse are mutually inverse") {
  RunConfig cfg = minimal();
  cfg.master_seed = 7;
  cfg.out_dir = "elsewhere";
  cfg.dataset_seed = 99;
  cfg.probe_seed = 123;
  cfg.kernel = KernelKind::kRbf;
  cfg.bandwidth = 2.5;
  cfg.scope = AggregateMode::kFinalLayer;
  cfg.policy.method = cfg.method_label();
  cfg.surrogates[0].input = "";
  cfg.surrogates[0].subsample = 0.5;
  NamedAttack pgd;
  pgd.name = "pgd";
  pgd.config.kind = AttackKind::kPgd;
  pgd.config.epsilon = 0.2;
  pgd.config.alpha = 0.02;
  pgd.config.steps = 10;
  pgd.config.random_start = true;
  cfg.attacks.push_back(pgd);
  cfg.link = LinkKind::kIdentity;
  cfg.bootstrap_trials = 250;

  const std::string text = render_run_config(cfg);
  const RunConfig back = parse_run_config(text);
  CHECK(render_run_config(back) == text);
  CHECK(back.master_seed == 7);
  CHECK(back.dataset_seed == 99);
  CHECK(back.probe_seed == 123);
  CHECK(back.kernel == KernelKind::kRbf);
  CHECK(back.bandwidth == 2.5);
  CHECK(back.scope == AggregateMode::kFinalLayer);
  CHECK(back.surrogates[0].subsample == 0.5);
  CHECK(back.attacks[1].config.random_start);
  CHECK(back.link == LinkKind::kIdentity);
  CHECK(back.bootstrap_trials == 250);
}

TEST_CASE("parser rejects malformed text") {
  CHECK_THROWS_AS(parse_run_config("surrogates = s1\nattacks = fgsm\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("dataset.kind = blobs\nattacks = fgsm\n"),
                  ConfigError);
  CHECK_THROWS_AS(parse_run_config("dataset.kind = blobs\nsurrogates = s1\n"),
                  ConfigError);
  CHECK_THROWS_WITH(parse_run_config(std::string(kMinimalText) + "mystery = 1\n"),
                    Catch::Matchers::ContainsSubstring("unknown config key 'mystery'"));
  CHECK_THROWS_WITH(parse_run_config(std::string(kMinimalText) + "master_seed = 1\n" +
                                     "master_seed = 2\n"),
                    Catch::Matchers::ContainsSubstring("duplicate config key"));
  CHECK_THROWS_WITH(parse_run_config(std::string(kMinimalText) + "probe.size =\n"),
                    Catch::Matchers::ContainsSubstring("empty value"));
  CHECK_THROWS_WITH(parse_run_config(std::string(kMinimalText) + "not a pair\n"),
                    Catch::Matchers::ContainsSubstring("line 6"));
  CHECK_THROWS_AS(parse_run_config(std::string(kMinimalText) +
                                   "attack.fgsm.random_start = yes\n"),
                  ConfigError);
  CHECK_THROWS_AS(parse_run_config(std::string(kMinimalText) + "dataset.size = -4\n"),
                  FormatError);
  CHECK_THROWS_AS(parse_run_config("dataset.kind = blobs\nsurrogates = s1,,s2\n"
                                   "attacks = fgsm\n"),
                  ConfigError);
}

TEST_CASE("comments and blank lines are ignored") {
  const RunConfig cfg = parse_run_config(std::string("# leading comment\n\n") +
                                         kMinimalText + "\n# trailing\n");
  CHECK(cfg.target.layers == "dense:4,relu,dense:2");
}

TEST_CASE("validate rejects inconsistent configurations") {
  SECTION("inverted thresholds fail as a policy error") {
    RunConfig cfg = minimal();
    cfg.policy.r1 = 0.3;
    cfg.policy.r2 = 0.5;
    CHECK_THROWS_AS(cfg.validate(), PolicyError);
  }
  SECTION("bandwidth requires the rbf kernel") {
    RunConfig cfg = minimal();
    cfg.bandwidth = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SECTION("duplicate and malformed ids") {
    RunConfig cfg = minimal();
    cfg.surrogates.push_back(cfg.surrogates[0]);
    CHECK_THROWS_WITH(cfg.validate(),
                      Catch::Matchers::ContainsSubstring("duplicate model id 's1'"));
    cfg.surrogates[1].id = "s 2";
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SECTION("surrogate list must not be empty") {
    RunConfig cfg = minimal();
    cfg.surrogates.clear();
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SECTION("input shape must carry the dataset's feature count") {
    RunConfig cfg = minimal();
    cfg.target.input = "1x3x3";
    CHECK_THROWS_WITH(cfg.validate(),
                      Catch::Matchers::ContainsSubstring("dataset provides 8"));
  }
  SECTION("unbuildable architectures fail before training") {
    RunConfig cfg = minimal();
    cfg.surrogates[0].layers = "conv:4:3,relu,flatten,dense:2";
    CHECK_THROWS_AS(cfg.validate(), Error);
  }
  SECTION("epoch and subsample bounds") {
    RunConfig cfg = minimal();
    cfg.target.epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = minimal();
    cfg.surrogates[0].subsample = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SECTION("policy method must match the similarity configuration") {
    RunConfig cfg = minimal();
    cfg.scope = AggregateMode::kMeanAll;
    CHECK_THROWS_WITH(cfg.validate(), Catch::Matchers::ContainsSubstring("cka_linear"));
  }
  SECTION("bootstrap trial floor") {
    RunConfig cfg = minimal();
    cfg.bootstrap_trials = 99;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
}

TEST_CASE("method label follows scope and kernel") {
  RunConfig cfg = minimal();
  CHECK(cfg.method_label() == "diag_band");
  cfg.scope = AggregateMode::kMeanAll;
  CHECK(cfg.method_label() == "cka_linear");
  cfg.kernel = KernelKind::kRbf;
  cfg.scope = AggregateMode::kFinalLayer;
  CHECK(cfg.method_label() == "cka_rbf");
}

TEST_CASE("stage seeds derive from the master seed") {
  const RunConfig cfg = minimal();
  CHECK(cfg.dataset_seed_value() == derive_seed(42, "dataset", "blobs"));
  CHECK(cfg.probe_seed_value() == derive_seed(42, "probe", "blobs"));
  CHECK(cfg.stage_seed("train", "s1") == derive_seed(42, "train", "s1"));
  CHECK(cfg.stage_seed("train", "s1") != cfg.stage_seed("train", "s2"));
  CHECK(cfg.stage_seed("train", "s1") != cfg.stage_seed("init", "s1"));

  RunConfig pinned = minimal();
  pinned.dataset_seed = 5;
  pinned.probe_seed = 6;
  CHECK(pinned.dataset_seed_value() == 5);
  CHECK(pinned.probe_seed_value() == 6);
}

TEST_CASE("descriptor and hyperparameters resolve per model") {
  const RunConfig cfg = minimal();
  const NetworkDescriptor d = cfg.descriptor_for(cfg.surrogates[0]);
  CHECK(d.id == "s1");
  CHECK(d.input_shape == std::vector<std::size_t>{8});
  CHECK(d.class_count == 2);
  CHECK(d.init_seed == derive_seed(42, "init", "s1"));
  CHECK(d.layers.size() == 3);

  const Hyperparams hp = cfg.hyperparams_for(cfg.surrogates[0]);
  CHECK(hp.epochs == 30);
  CHECK(hp.seed == derive_seed(42, "train", "s1"));
  CHECK(hp.subsample_fraction == 1.0);

  const auto models = cfg.model_list();
  REQUIRE(models.size() == 2);
  CHECK(models[0]->id == "target");
  CHECK(models[1]->id == "s1");
}

TEST_CASE("probe set id matches the capture stage's default") {
  RunConfig cfg = minimal();
  cfg.probe_size = 60;
  CHECK(cfg.probe_set_id() ==
        "blobs-p60-s" + std::to_string(derive_seed(42, "probe", "blobs")));
}

TEST_CASE("bundled demo config parses, validates, and renders canonically") {
  const RunConfig cfg = load_run_config(std::string(TBRISK_CONFIG_DIR) +
                                        "/blobs_demo.cfg");
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.master_seed == 42);
  CHECK(cfg.dataset_kind == DatasetKind::kBlobs);
  CHECK(cfg.surrogates.size() == 8);
  REQUIRE(cfg.attacks.size() == 1);
  CHECK(cfg.attacks[0].config.kind == AttackKind::kPgd);
  CHECK(cfg.attacks[0].config.epsilon == 0.1);
  CHECK(cfg.attacks[0].config.steps == 20);
  const std::string text = render_run_config(cfg);
  CHECK(render_run_config(parse_run_config(text)) == text);
}
