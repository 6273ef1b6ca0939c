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
#include "oracles.hpp"
#include "tbrisk/similarity.hpp"

using namespace tbrisk;

namespace {

ActivationMatrix act(const Matrix& data, const std::string& model = "m",
                     std::size_t layer = 0, const std::string& probe = "p") {
  return ActivationMatrix{model, layer, probe, data};
}

}  // namespace

TEST_CASE("linear gram of the identity is the identity", "[similarity]") {
  const Matrix k = gram(Matrix::identity(2), KernelSpec::linear());
  REQUIRE(max_abs_diff(k, Matrix::identity(2)) == 0.0);
}

TEST_CASE("rbf gram has unit diagonal and matches the pairwise oracle", "[similarity][oracle]") {
  RngStream rng(5);
  const Matrix x = oracles::random_matrix(5, 3, rng);

  const Matrix k_median = gram(x, KernelSpec::rbf());
  for (std::size_t i = 0; i < 5; ++i) REQUIRE(k_median.at(i, i) == 1.0);

  const double sigma = oracles::naive_median_pairwise_distance(x);
  REQUIRE(median_pairwise_distance(x) == Catch::Approx(sigma).epsilon(1e-12));
  REQUIRE(max_abs_diff(k_median, oracles::naive_rbf_gram(x, sigma)) <= 1e-12);

  const Matrix k_fixed = gram(x, KernelSpec::rbf_with_bandwidth(0.7));
  REQUIRE(max_abs_diff(k_fixed, oracles::naive_rbf_gram(x, 0.7)) <= 1e-12);
}

TEST_CASE("gram rejects bad bandwidths and degenerate inputs", "[similarity]") {
  RngStream rng(6);
  const Matrix x = oracles::random_matrix(4, 2, rng);
  REQUIRE_THROWS_AS(gram(x, KernelSpec::rbf_with_bandwidth(0.0)), ConfigError);
  REQUIRE_THROWS_AS(gram(x, KernelSpec::rbf_with_bandwidth(-1.0)), ConfigError);

  Matrix dup(3, 2, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
  REQUIRE_THROWS_AS(gram(dup, KernelSpec::rbf()), DegenerateInputError);
}

TEST_CASE("gram matrices are symmetric and PSD in quadratic forms", "[similarity]") {
  RngStream rng(7);
  const Matrix x = oracles::random_matrix(8, 4, rng);
  for (const KernelSpec& ks : {KernelSpec::linear(), KernelSpec::rbf()}) {
    const Matrix k = gram(x, ks);
    REQUIRE(max_abs_diff(k, transpose(k)) == 0.0);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> v(8);
      double norm2 = 0.0;
      for (double& e : v) {
        e = rng.normal();
        norm2 += e * e;
      }
      double quad = 0.0;
      for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < 8; ++j) quad += v[i] * k.at(i, j) * v[j];
      REQUIRE(quad >= -1e-9 * norm2 * frobenius_norm(k));
    }
  }
}

TEST_CASE("biased hsic matches the quadruple-loop oracle", "[similarity][oracle]") {
  RngStream rng(8);
  for (std::size_t n : {4u, 5u, 6u, 7u, 8u}) {
    const Matrix a = oracles::random_matrix(n, 3, rng);
    const Matrix b = oracles::random_matrix(n, 5, rng);
    const Matrix k = gram(a, KernelSpec::linear());
    const Matrix l = gram(b, KernelSpec::linear());
    const double fast = hsic(k, l, HsicEstimator::kBiased);
    const double brute = oracles::brute_force_biased_hsic(k, l);
    REQUIRE(std::abs(fast - brute) <= 1e-10);
  }
}

TEST_CASE("biased self-hsic equals the centered Frobenius identity", "[similarity][oracle]") {
  RngStream rng(9);
  const Matrix x = oracles::random_matrix(6, 4, rng);
  const Matrix k = gram(x, KernelSpec::linear());

  // tr(KHKH)/(n-1)^2 = |HKH|_F^2/(n-1)^2.
  const std::size_t n = 6;
  Matrix h = Matrix::identity(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) h.set(i, j, h.at(i, j) - 1.0 / n);
  const Matrix hkh = oracles::naive_matmul(oracles::naive_matmul(h, k), h);
  const double expect = std::pow(oracles::naive_frobenius(hkh), 2.0) / ((n - 1.0) * (n - 1.0));
  REQUIRE(hsic(k, k, HsicEstimator::kBiased) == Catch::Approx(expect).epsilon(1e-10));
}

TEST_CASE("constant features have (near) zero hsic", "[similarity]") {
  Matrix c(4, 3);
  for (std::size_t i = 0; i < c.size(); ++i) c.mutable_data()[i] = 2.5;
  const Matrix k = gram(c, KernelSpec::linear());
  REQUIRE(std::abs(hsic(k, k, HsicEstimator::kBiased)) <= 1e-12);
}

TEST_CASE("hsic validates shapes and estimator minimums", "[similarity]") {
  RngStream rng(10);
  const Matrix k4 = gram(oracles::random_matrix(4, 2, rng), KernelSpec::linear());
  const Matrix k5 = gram(oracles::random_matrix(5, 2, rng), KernelSpec::linear());
  REQUIRE_THROWS_AS(hsic(k4, k5, HsicEstimator::kBiased), ShapeError);
  REQUIRE_THROWS_AS(hsic(Matrix(2, 3), Matrix(2, 3), HsicEstimator::kBiased), ShapeError);

  const Matrix k3 = gram(oracles::random_matrix(3, 2, rng), KernelSpec::linear());
  REQUIRE_THROWS_AS(hsic(k3, k3, HsicEstimator::kUnbiased), DegenerateInputError);
  REQUIRE_NOTHROW(hsic(k4, k4, HsicEstimator::kUnbiased));
}

TEST_CASE("cka self-similarity, symmetry, and invariances", "[similarity]") {
  RngStream rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = oracles::random_matrix(12, 6, rng);
    const SimilarityRecord self = cka(act(x), act(x));
    REQUIRE(self.score == Catch::Approx(1.0).margin(1e-6));
  }

  const Matrix x = oracles::random_matrix(10, 5, rng);
  const Matrix y = oracles::random_matrix(10, 7, rng);

  SECTION("exact symmetry") {
    const double ab = cka(act(x, "a"), act(y, "b")).score;
    const double ba = cka(act(y, "b"), act(x, "a")).score;
    REQUIRE(ab == ba);
  }
  SECTION("orthogonal right-multiplication invariance") {
    const Matrix q = oracles::random_orthogonal(5, rng);
    const Matrix xq = oracles::naive_matmul(x, q);
    const double base = cka(act(x), act(y)).score;
    const double rotated = cka(act(xq), act(y)).score;
    REQUIRE(std::abs(base - rotated) <= 1e-6);
    REQUIRE(cka(act(x), act(xq)).score == Catch::Approx(1.0).margin(1e-6));
  }
  SECTION("isotropic scaling invariance") {
    const Matrix xs = scale(x, 3.7);
    REQUIRE(cka(act(x), act(xs)).score == Catch::Approx(1.0).margin(1e-6));
    const double base = cka(act(x), act(y)).score;
    REQUIRE(std::abs(cka(act(xs), act(y)).score - base) <= 1e-6);
  }
  SECTION("rbf kernel also scores self as 1") {
    REQUIRE(cka(act(x), act(x), KernelSpec::rbf()).score ==
            Catch::Approx(1.0).margin(1e-6));
  }
  SECTION("unbiased estimator stays close on self") {
    REQUIRE(cka(act(x), act(x), KernelSpec::linear(), HsicEstimator::kUnbiased).score ==
            Catch::Approx(1.0).margin(1e-6));
  }
}

TEST_CASE("cka rejects mismatched probes and constant activations", "[similarity]") {
  RngStream rng(12);
  const Matrix x = oracles::random_matrix(6, 3, rng);

  REQUIRE_THROWS_AS(cka(act(x, "a", 0, "p1"), act(x, "b", 0, "p2")), ConfigError);

  Matrix c(6, 3);
  for (std::size_t i = 0; i < c.size(); ++i) c.mutable_data()[i] = 1.0;
  REQUIRE_THROWS_AS(cka(act(c), act(x)), DegenerateInputError);
  REQUIRE_THROWS_AS(cka(act(x), act(c)), DegenerateInputError);
}

TEST_CASE("every emitted score lies in the unit interval", "[similarity]") {
  RngStream rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix x = oracles::random_matrix(9, 4, rng);
    const Matrix y = oracles::random_matrix(9, 4, rng);
    for (HsicEstimator est : {HsicEstimator::kBiased, HsicEstimator::kUnbiased}) {
      const SimilarityRecord r = cka(act(x), act(y), KernelSpec::linear(), est);
      REQUIRE(r.score >= 0.0);
      REQUIRE(r.score <= 1.0);
    }
  }
}

TEST_CASE("layer matrix matches cell-by-cell cka", "[similarity]") {
  RngStream rng(14);
  std::vector<ActivationMatrix> a = {act(oracles::random_matrix(8, 3, rng), "a", 1),
                                     act(oracles::random_matrix(8, 5, rng), "a", 3)};
  std::vector<ActivationMatrix> b = {act(oracles::random_matrix(8, 4, rng), "b", 1),
                                     act(oracles::random_matrix(8, 2, rng), "b", 2),
                                     act(oracles::random_matrix(8, 6, rng), "b", 4)};

  const LayerSimilarityMatrix lm = layer_matrix(a, b);
  REQUIRE(lm.rows() == 2);
  REQUIRE(lm.cols() == 3);
  REQUIRE(lm.layers_a == std::vector<std::size_t>{1, 3});
  REQUIRE(lm.layers_b == std::vector<std::size_t>{1, 2, 4});
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      REQUIRE(lm.at(i, j).has_value());
      REQUIRE(*lm.at(i, j) == cka(a[i], b[j]).score);
    }
  }

  // Same model both sides puts 1 on the diagonal.
  const LayerSimilarityMatrix self = layer_matrix(a, a);
  for (std::size_t i = 0; i < 2; ++i)
    REQUIRE(*self.at(i, i) == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("degenerate layers become missing cells, not zeros", "[similarity]") {
  RngStream rng(15);
  Matrix c(8, 3);
  for (std::size_t i = 0; i < c.size(); ++i) c.mutable_data()[i] = 4.0;
  std::vector<ActivationMatrix> a = {act(oracles::random_matrix(8, 3, rng), "a", 0),
                                     act(c, "a", 1)};
  std::vector<ActivationMatrix> b = {act(oracles::random_matrix(8, 4, rng), "b", 0)};

  const LayerSimilarityMatrix lm = layer_matrix(a, b);
  REQUIRE(lm.at(0, 0).has_value());
  REQUIRE(!lm.at(1, 0).has_value());

  REQUIRE_THROWS_AS(layer_matrix({}, b), ConfigError);
}

TEST_CASE("aggregate modes compute documented selections", "[similarity]") {
  LayerSimilarityMatrix lm;
  lm.model_a = "a";
  lm.model_b = "b";
  lm.method = "cka_linear";
  lm.layers_a = {0, 1, 2};
  lm.layers_b = {0, 1, 2};
  lm.n = 8;
  lm.probe_set_id = "p";
  // Row-major known grid.
  lm.grid = {0.9, 0.5, 0.1, 0.4, 0.8, 0.3, 0.2, 0.6, 0.7};

  SECTION("mean_all averages everything") {
    const SimilarityRecord r = aggregate_score(lm, AggregateMode::kMeanAll);
    REQUIRE(r.score == Catch::Approx((0.9 + 0.5 + 0.1 + 0.4 + 0.8 + 0.3 + 0.2 + 0.6 + 0.7) / 9.0));
    REQUIRE(r.method == "cka_linear");
    REQUIRE(r.layer_a == "aggregate");
  }
  SECTION("final_layer picks the bottom-right cell") {
    const SimilarityRecord r = aggregate_score(lm, AggregateMode::kFinalLayer);
    REQUIRE(r.score == 0.7);
  }
  SECTION("band width 0.34 keeps |i-j| <= 1 on a 3x3 grid") {
    // |i/3 - j/3| <= 0.34 selects the 7 cells with |i - j| <= 1.02.
    const SimilarityRecord r = aggregate_score(lm, AggregateMode::kMeanDiagBand, 0.34);
    REQUIRE(r.score ==
            Catch::Approx((0.9 + 0.5 + 0.4 + 0.8 + 0.3 + 0.6 + 0.7) / 7.0).epsilon(1e-12));
    REQUIRE(r.method == "diag_band");
  }
  SECTION("zero width keeps the exact relative diagonal") {
    const SimilarityRecord r = aggregate_score(lm, AggregateMode::kMeanDiagBand, 0.0);
    REQUIRE(r.score == Catch::Approx((0.9 + 0.8 + 0.7) / 3.0).epsilon(1e-12));
  }
  SECTION("missing cells are skipped") {
    lm.grid[4] = std::nullopt;  // center cell
    const SimilarityRecord r = aggregate_score(lm, AggregateMode::kMeanAll);
    REQUIRE(r.score == Catch::Approx((0.9 + 0.5 + 0.1 + 0.4 + 0.3 + 0.2 + 0.6 + 0.7) / 8.0));
  }
  SECTION("all-ones grid means 1") {
    lm.grid.assign(9, 1.0);
    REQUIRE(aggregate_score(lm, AggregateMode::kMeanAll).score == 1.0);
  }
  SECTION("empty selection is a config error") {
    lm.grid.assign(9, std::nullopt);
    REQUIRE_THROWS_AS(aggregate_score(lm, AggregateMode::kMeanAll), ConfigError);
  }
}

TEST_CASE("minibatch cka reduces to unbiased cka on a single batch", "[similarity]") {
  RngStream rng(16);
  const Matrix x = oracles::random_matrix(12, 4, rng);
  const Matrix y = oracles::random_matrix(12, 5, rng);

  const double full = cka(act(x), act(y), KernelSpec::linear(), HsicEstimator::kUnbiased).score;
  const double mb = minibatch_cka({act(x)}, {act(y)}).score;
  REQUIRE(std::abs(full - mb) <= 1e-10);
}

TEST_CASE("minibatch cka is batch-order invariant and near the full score", "[similarity]") {
  // Correlated activations so scores sit well inside (0,1).
  RngStream rng(17);
  const std::size_t n = 200;
  Matrix x(n, 6), y(n, 6);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t f = 0; f < 6; ++f) {
      const double base = rng.normal();
      x.set(i, f, base);
      y.set(i, f, base + 0.5 * rng.normal());
    }
  }

  auto slice = [&](const Matrix& m, std::size_t b) {
    return act(m.rows_slice(b * 50, (b + 1) * 50), "m", 0, "p");
  };
  std::vector<ActivationMatrix> xb, yb;
  for (std::size_t b = 0; b < 4; ++b) {
    xb.push_back(slice(x, b));
    yb.push_back(slice(y, b));
  }

  const double full = cka(act(x), act(y), KernelSpec::linear(), HsicEstimator::kUnbiased).score;
  const SimilarityRecord mb = minibatch_cka(xb, yb);
  REQUIRE(std::abs(mb.score - full) <= 0.05);
  REQUIRE(mb.n == n);

  std::vector<ActivationMatrix> xp = {xb[2], xb[0], xb[3], xb[1]};
  std::vector<ActivationMatrix> yp = {yb[2], yb[0], yb[3], yb[1]};
  REQUIRE(std::abs(minibatch_cka(xp, yp).score - mb.score) <= 1e-12);
}

TEST_CASE("minibatch cka validates partitions", "[similarity]") {
  RngStream rng(18);
  const auto a = act(oracles::random_matrix(8, 3, rng));
  const auto b = act(oracles::random_matrix(8, 3, rng));
  const auto small = act(oracles::random_matrix(3, 3, rng));
  const auto other = act(oracles::random_matrix(8, 3, rng), "m", 0, "other-probe");

  REQUIRE_THROWS_AS(minibatch_cka({a, b}, {a}), ConfigError);
  REQUIRE_THROWS_AS(minibatch_cka({small}, {small}), DegenerateInputError);
  REQUIRE_THROWS_AS(minibatch_cka({a}, {other}), ConfigError);
}

TEST_CASE("similarity csv uses the fixed column order", "[similarity]") {
  SimilarityRecord r;
  r.model_a = "target";
  r.model_b = "s1";
  r.method = "diag_band";
  r.layer_a = "aggregate";
  r.layer_b = "aggregate";
  r.score = 0.5;
  r.n = 60;
  r.probe_set_id = "blobs-p60-s7";

  const std::string csv = similarity_csv({r});
  REQUIRE(csv ==
          "model_a,model_b,method,layer_a,layer_b,score,n,probe_set\n"
          "target,s1,diag_band,aggregate,aggregate,0.5,60,blobs-p60-s7\n");
}
