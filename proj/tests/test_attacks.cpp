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

#include <cmath>
#include <vector>

#include "catch2/catch_amalgamated.hpp"
#include "tbrisk/attacks.hpp"

using namespace tbrisk;

namespace {

struct Zoo {
  Dataset data = generate_dataset(DatasetKind::kBlobs, 400, 2, 42);
  TrainedModel target = make_target();
  Matrix eval_x = data.rows_at(data.indices_of(Split::kTest));
  std::vector<int> eval_y = data.labels_at(data.indices_of(Split::kTest));

  TrainedModel make_target() {
    NetworkDescriptor d;
    d.id = "target";
    d.input_shape = {data.dim()};
    d.class_count = 2;
    d.init_seed = 11;
    d.layers = {LayerSpec::dense(16), LayerSpec::relu(), LayerSpec::dense(2)};
    Hyperparams hp;
    hp.epochs = 25;
    hp.seed = 12;
    return train(d, data, hp);
  }
};

// Identity stack: logits equal the (nonnegative) inputs, so the prediction
// is the argmax coordinate. Lets tests pin predictions by hand.
TrainedModel identity_model() {
  NetworkDescriptor d;
  d.id = "ident";
  d.input_shape = {2};
  d.class_count = 2;
  d.init_seed = 0;
  d.layers = {LayerSpec::dense(2), LayerSpec::relu(), LayerSpec::dense(2)};
  TrainedModel m{d, init_params(d), {}};
  m.params[0].w = {1.0, 0.0, 0.0, 1.0};
  m.params[0].b = {0.0, 0.0};
  m.params[2].w = {1.0, 0.0, 0.0, 1.0};
  m.params[2].b = {0.0, 0.0};
  return m;
}

AttackConfig pgd_config(double eps, std::size_t steps, std::uint64_t seed = 0,
                        bool random_start = false) {
  AttackConfig c;
  c.kind = AttackKind::kPgd;
  c.epsilon = eps;
  c.alpha = steps > 0 ? 2.5 * eps / static_cast<double>(steps) : eps;
  c.steps = steps;
  c.random_start = random_start;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("fgsm with zero epsilon is the identity", "[attacks]") {
  Zoo z;
  AttackConfig c;
  c.kind = AttackKind::kFgsm;
  c.epsilon = 0.0;
  const AdversarialBatch b = fgsm(z.target, z.eval_x, z.eval_y, c);
  REQUIRE(b.adversarials.data() == z.eval_x.data());
}

TEST_CASE("every adversarial honors the budget and the unit box", "[attacks]") {
  Zoo z;
  for (double eps : {0.05, 0.1, 0.3}) {
    AttackConfig c;
    c.kind = AttackKind::kFgsm;
    c.epsilon = eps;
    const AdversarialBatch b = fgsm(z.target, z.eval_x, z.eval_y, c);
    for (std::size_t k = 0; k < b.adversarials.size(); ++k) {
      REQUIRE(std::abs(b.adversarials.data()[k] - b.originals.data()[k]) <= eps + 1e-6);
      REQUIRE(b.adversarials.data()[k] >= 0.0);
      REQUIRE(b.adversarials.data()[k] <= 1.0);
    }

    const AdversarialBatch p =
        pgd(z.target, z.eval_x, z.eval_y, pgd_config(eps, 10, 3, true));
    for (std::size_t k = 0; k < p.adversarials.size(); ++k) {
      REQUIRE(std::abs(p.adversarials.data()[k] - p.originals.data()[k]) <= eps + 1e-6);
      REQUIRE(p.adversarials.data()[k] >= 0.0);
      REQUIRE(p.adversarials.data()[k] <= 1.0);
    }
  }
}

TEST_CASE("fgsm cannot decrease the loss of an affine classifier", "[attacks]") {
  // Push the hidden biases far positive so the ReLU never deactivates on
  // [0,1] inputs: the network is affine over every epsilon ball, and the
  // cross-entropy is convex along the (clipped) sign-gradient direction.
  Zoo z;
  TrainedModel affine = z.target;
  for (double& b : affine.params[0].b) b += 10.0;

  const ForwardTrace t = forward(affine, z.eval_x);
  for (double v : t.outputs[1].data()) REQUIRE(v > 0.0);  // premise: ReLU active

  AttackConfig c;
  c.kind = AttackKind::kFgsm;
  c.epsilon = 0.1;
  const AdversarialBatch b = fgsm(affine, z.eval_x, z.eval_y, c);
  REQUIRE(batch_loss(affine, b.adversarials, z.eval_y) >=
          batch_loss(affine, z.eval_x, z.eval_y));
}

TEST_CASE("single-step pgd with alpha = epsilon reduces to fgsm", "[attacks]") {
  Zoo z;
  AttackConfig f;
  f.kind = AttackKind::kFgsm;
  f.epsilon = 0.08;

  AttackConfig p = pgd_config(0.08, 1);
  p.alpha = 0.08;

  const AdversarialBatch bf = fgsm(z.target, z.eval_x, z.eval_y, f);
  const AdversarialBatch bp = pgd(z.target, z.eval_x, z.eval_y, p);
  REQUIRE(max_abs_diff(bf.adversarials, bp.adversarials) <= 1e-12);
}

TEST_CASE("pgd with more steps is at least as strong as fgsm", "[attacks]") {
  Zoo z;
  const double eps = 0.1;
  AttackConfig f;
  f.kind = AttackKind::kFgsm;
  f.epsilon = eps;

  const AdversarialBatch bf = fgsm(z.target, z.eval_x, z.eval_y, f);
  const AdversarialBatch bp = pgd(z.target, z.eval_x, z.eval_y, pgd_config(eps, 20));
  const double rate_f = attack_success(z.target, bf).restricted;
  const double rate_p = attack_success(z.target, bp).restricted;
  REQUIRE(rate_p >= rate_f);
}

TEST_CASE("restricted success rate does not collapse as epsilon grows", "[attacks]") {
  Zoo z;
  double prev = -1.0;
  for (double eps : {0.02, 0.05, 0.1, 0.2}) {
    AttackConfig c;
    c.kind = AttackKind::kFgsm;
    c.epsilon = eps;
    const double rate =
        attack_success(z.target, fgsm(z.target, z.eval_x, z.eval_y, c)).restricted;
    if (prev >= 0.0) REQUIRE(rate >= prev - 0.02);
    prev = rate;
  }
}

TEST_CASE("pgd random start is seed-deterministic", "[attacks]") {
  Zoo z;
  const AdversarialBatch a = pgd(z.target, z.eval_x, z.eval_y, pgd_config(0.1, 5, 9, true));
  const AdversarialBatch b = pgd(z.target, z.eval_x, z.eval_y, pgd_config(0.1, 5, 9, true));
  REQUIRE(a.adversarials.data() == b.adversarials.data());

  const AdversarialBatch c = pgd(z.target, z.eval_x, z.eval_y, pgd_config(0.1, 5, 10, true));
  REQUIRE(a.adversarials.data() != c.adversarials.data());
}

TEST_CASE("attack_success counts a hand-built batch correctly", "[attacks][oracle]") {
  const TrainedModel m = identity_model();
  AdversarialBatch b;
  b.originals = Matrix::from_rows({{0.8, 0.2}, {0.9, 0.1}, {0.1, 0.9}, {0.3, 0.7}});
  b.adversarials = Matrix::from_rows({{0.2, 0.8}, {0.85, 0.15}, {0.9, 0.1}, {0.7, 0.3}});
  b.labels = {0, 0, 0, 1};
  b.source_model_id = "ident";
  b.config.epsilon = 1.0;

  // Predictions on originals: 0, 0, 1, 1 -> correct for examples 0, 1, 3.
  // Predictions on adversarials: 1, 0, 0, 0 -> flips for examples 0 and 3.
  const SuccessRates r = attack_success(m, b);
  REQUIRE(r.correct_originals == 3);
  REQUIRE(r.restricted == Catch::Approx(2.0 / 3.0).epsilon(1e-12));
  REQUIRE(r.unrestricted == Catch::Approx(2.0 / 4.0).epsilon(1e-12));
}

TEST_CASE("unchanged adversarials score zero", "[attacks]") {
  Zoo z;
  AdversarialBatch b;
  b.originals = z.eval_x;
  b.adversarials = z.eval_x;
  b.labels = z.eval_y;
  b.source_model_id = "target";
  b.config.epsilon = 0.0;
  REQUIRE(attack_success(z.target, b).restricted == 0.0);
}

TEST_CASE("all-wrong originals make the restricted rate undefined", "[attacks]") {
  // Zero weights, bias toward class 0: the model predicts 0 everywhere.
  TrainedModel m = identity_model();
  for (LayerParams& p : m.params) std::fill(p.w.begin(), p.w.end(), 0.0);
  m.params[2].b = {1.0, 0.0};

  AdversarialBatch b;
  b.originals = Matrix::from_rows({{0.5, 0.5}, {0.2, 0.8}});
  b.adversarials = b.originals;
  b.labels = {1, 1};  // never the constant class
  b.source_model_id = "ident";
  b.config.epsilon = 0.0;
  REQUIRE_THROWS_AS(attack_success(m, b), DegenerateInputError);
}

TEST_CASE("attack config validation and warnings", "[attacks]") {
  AttackConfig c;
  c.epsilon = -0.1;
  REQUIRE_THROWS_AS(c.validate(), ConfigError);

  AttackConfig p = pgd_config(0.1, 0);
  p.steps = 0;
  REQUIRE_THROWS_AS(p.validate(), ConfigError);

  AttackConfig neg = pgd_config(0.1, 5);
  neg.alpha = -1.0;
  REQUIRE_THROWS_AS(neg.validate(), ConfigError);

  AttackConfig wide = pgd_config(0.1, 5);
  wide.alpha = 0.5;
  REQUIRE_NOTHROW(wide.validate());
  REQUIRE(!wide.warning().empty());
  REQUIRE(pgd_config(0.1, 20).warning().empty());
}

TEST_CASE("batch validation rejects out-of-ball tampering", "[attacks]") {
  AdversarialBatch b;
  b.originals = Matrix::from_rows({{0.5, 0.5}});
  b.adversarials = Matrix::from_rows({{0.9, 0.5}});
  b.labels = {0};
  b.config.epsilon = 0.1;
  REQUIRE_THROWS_AS(b.validate(), NumericalError);

  b.config.epsilon = 0.5;
  REQUIRE_NOTHROW(b.validate());
}

TEST_CASE("manifest csv lists labels and predictions", "[attacks]") {
  const TrainedModel m = identity_model();
  AdversarialBatch b;
  b.originals = Matrix::from_rows({{0.8, 0.2}, {0.1, 0.9}});
  b.adversarials = Matrix::from_rows({{0.2, 0.8}, {0.1, 0.9}});
  b.labels = {0, 1};
  b.source_model_id = "ident";
  b.config.epsilon = 1.0;

  REQUIRE(adversarial_manifest_csv(m, b) ==
          "index,label,orig_pred,adv_pred\n"
          "0,0,0,1\n"
          "1,1,1,1\n");
}
