/*
 * Copyright 2026 The MOOMIN Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <catch2/catch.hpp>
#include <cmath>
#include <string>
#include <vector>

#include "moomin/diagnostics.hpp"
#include "moomin/synergy_model.hpp"
#include "test_helpers.hpp"

using namespace moomin;
using test::finite_difference;
using test::rel_err;

namespace {

Model tiny_model(int r, std::uint64_t seed, std::size_t protein_dim,
                 std::vector<std::string> cells = {"c1", "c2"}) {
  ModelConfig mc;
  mc.r = r;
  mc.protein_dim = protein_dim;
  mc.cell_ids = std::move(cells);
  return Model::init(mc, seed);
}

}  // namespace

TEST_CASE("pair_cell_rep widths", "[synergy_model]") {
  SplitMix64 rng(141);
  Tape tape;
  auto make_rep = [&](int r) {
    MultiScaleRep rep;
    for (int l = 0; l <= r; ++l) {
      rep.blocks.push_back(test::random_tensor(1, scale_width(l), rng));
    }
    return rep;
  };
  Tensor cell = test::random_tensor(1, kCellEmbeddingDim, rng);

  CHECK(pair_cell_rep(tape, make_rep(1), make_rep(1), cell).cols() == 272);
  CHECK(pair_cell_rep(tape, make_rep(2), make_rep(2), cell).cols() == 464);
  CHECK_THROWS_AS(pair_cell_rep(tape, make_rep(1), make_rep(2), cell),
                  DimensionError);

  // zero inputs give the zero vector
  MultiScaleRep za, zb;
  for (int l = 0; l <= 1; ++l) {
    za.blocks.push_back(Tensor::zeros(1, scale_width(l)));
    zb.blocks.push_back(Tensor::zeros(1, scale_width(l)));
  }
  Tensor zero_pair =
      pair_cell_rep(tape, za, zb, Tensor::zeros(1, kCellEmbeddingDim));
  for (double v : zero_pair.values()) CHECK(v == 0.0);
}

TEST_CASE("score head contract", "[synergy_model]") {
  SplitMix64 rng(151);
  Tape tape;

  // all-zero parameters score exactly one half
  HeadParams zeros;
  zeros.w1 = Tensor::zeros(10, kHeadHiddenDim, true);
  zeros.b1 = Tensor::zeros(1, kHeadHiddenDim, true);
  zeros.w2 = Tensor::zeros(kHeadHiddenDim, 1, true);
  zeros.b2 = Tensor::zeros(1, 1, true);
  SplitMix64 drop(1);
  CHECK(score(tape, zeros, test::random_tensor(1, 10, rng), false, drop)
            .scalar() == 0.5);

  // inference is deterministic: same input scores twice identically
  HeadParams head = HeadParams::init(0, rng);
  Tensor input = test::random_tensor(1, static_cast<int>(head.in_dim()), rng);
  const double s1 = score(tape, head, input, false, drop).scalar();
  const double s2 = score(tape, head, input, false, drop).scalar();
  CHECK(s1 == s2);
  CHECK(s1 > 0.0);
  CHECK(s1 < 1.0);

  CHECK_THROWS_AS(score(tape, head, test::random_tensor(1, 3, rng), false, drop),
                  DimensionError);
}

TEST_CASE("score gradients match finite differences", "[synergy_model]") {
  SplitMix64 rng(157);
  HeadParams head = HeadParams::init(0, rng);
  Tensor input = test::random_tensor(1, static_cast<int>(head.in_dim()), rng);
  auto loss = [&]() {
    Tape t;
    SplitMix64 drop(1);
    return score(t, head, input, false, drop).scalar();
  };
  Tape tape;
  SplitMix64 drop(1);
  tape.backward(score(tape, head, input, false, drop));
  for (Tensor param : {head.w1, head.b1, head.w2, head.b2}) {
    const auto fd = finite_difference(param, loss);
    for (std::size_t i = 0; i < param.size(); ++i) {
      CHECK(rel_err(param.grad_at(i / param.cols(), i % param.cols()), fd[i]) <
            1e-4);
    }
  }
}

TEST_CASE("bce analytic values", "[synergy_model]") {
  Tape tape;
  CHECK(bce(tape, 1, Tensor::from_values(1, 1, {0.5})).scalar() ==
        Approx(0.6931472).epsilon(1e-6));
  CHECK(bce(tape, 1, Tensor::from_values(1, 1, {1.0})).scalar() ==
        Approx(0.0).margin(1e-9));
  CHECK(bce(tape, 0, Tensor::from_values(1, 1, {0.9})).scalar() ==
        Approx(2.3025851).epsilon(1e-6));
  CHECK_THROWS_AS(bce(tape, 2, Tensor::from_values(1, 1, {0.5})),
                  ArgumentError);

  // finite at both boundaries, monotone decreasing in p for y=1
  const double at0 = bce(tape, 1, Tensor::from_values(1, 1, {0.0})).scalar();
  CHECK(std::isfinite(at0));
  double prev = at0;
  for (double p : {0.1, 0.3, 0.5, 0.7, 0.9, 1.0}) {
    const double v = bce(tape, 1, Tensor::from_values(1, 1, {p})).scalar();
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("batch_forward mean-loss decomposition", "[synergy_model]") {
  detail::TinyBundle bundle = detail::tiny_bundle(163);
  Model model = tiny_model(1, 163, bundle.features.protein_dim());

  SplitMix64 drop(1), walks(1);
  Tape tape;

  // batch of one: loss equals that record's bce
  std::vector<SynergyRecord> one = {bundle.records[0]};
  BatchResult single = batch_forward(tape, model, bundle.graph, bundle.features,
                                     one, RepMode::exact(), false, drop, walks);
  REQUIRE(single.scores.size() == 1);

  // duplicating a record leaves the mean unchanged
  std::vector<SynergyRecord> twice = {bundle.records[0], bundle.records[0]};
  BatchResult doubled = batch_forward(tape, model, bundle.graph,
                                      bundle.features, twice, RepMode::exact(),
                                      false, drop, walks);
  CHECK(doubled.loss.scalar() == Approx(single.loss.scalar()).margin(1e-12));

  // mean decomposition over a mixed batch
  BatchResult full = batch_forward(tape, model, bundle.graph, bundle.features,
                                   bundle.records, RepMode::exact(), false,
                                   drop, walks);
  double mean = 0.0;
  for (const SynergyRecord& rec : bundle.records) {
    std::vector<SynergyRecord> solo = {rec};
    mean += batch_forward(tape, model, bundle.graph, bundle.features, solo,
                          RepMode::exact(), false, drop, walks)
                .loss.scalar();
  }
  mean /= static_cast<double>(bundle.records.size());
  CHECK(full.loss.scalar() == Approx(mean).margin(1e-12));
}

TEST_CASE("batch_forward lists every unresolvable reference",
          "[synergy_model]") {
  detail::TinyBundle bundle = detail::tiny_bundle(167);
  Model model = tiny_model(1, 167, bundle.features.protein_dim());
  SplitMix64 drop(1), walks(1);
  Tape tape;
  std::vector<SynergyRecord> bad = {
      {"ghost1", "d2", "c1", 1},
      {"d1", "ghost2", "nocell", 0},
  };
  try {
    batch_forward(tape, model, bundle.graph, bundle.features, bad,
                  RepMode::exact(), false, drop, walks);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("ghost1") != std::string::npos);
    CHECK(msg.find("ghost2") != std::string::npos);
    CHECK(msg.find("nocell") != std::string::npos);
  }
  CHECK_THROWS_AS(batch_forward(tape, model, bundle.graph, bundle.features, {},
                                RepMode::exact(), false, drop, walks),
                  ArgumentError);
}

TEST_CASE("scores are valid probabilities in both pair orders",
          "[synergy_model]") {
  detail::TinyBundle bundle = detail::tiny_bundle(173);
  Model model = tiny_model(1, 173, bundle.features.protein_dim());
  SplitMix64 drop(1), walks(1);
  Tape tape;
  std::vector<SynergyRecord> ordered = {{"d1", "d2", "c1", 1}};
  std::vector<SynergyRecord> swapped = {{"d2", "d1", "c1", 1}};
  BatchResult ab = batch_forward(tape, model, bundle.graph, bundle.features,
                                 ordered, RepMode::exact(), false, drop, walks);
  BatchResult ba = batch_forward(tape, model, bundle.graph, bundle.features,
                                 swapped, RepMode::exact(), false, drop, walks);
  // ordered concatenation: no symmetry is assumed, only validity
  CHECK(ab.scores[0] > 0.0);
  CHECK(ab.scores[0] < 1.0);
  CHECK(ba.scores[0] > 0.0);
  CHECK(ba.scores[0] < 1.0);
}

TEST_CASE("sampled scores approach exact scores at large s",
          "[synergy_model]") {
  detail::TinyBundle bundle = detail::tiny_bundle(179);
  Model model = tiny_model(2, 179, bundle.features.protein_dim());
  SplitMix64 drop(1);
  Tape tape;
  SplitMix64 walks_a(5), walks_b(6);
  BatchResult exact = batch_forward(tape, model, bundle.graph, bundle.features,
                                    bundle.records, RepMode::exact(), false,
                                    drop, walks_a);
  BatchResult sampled = batch_forward(
      tape, model, bundle.graph, bundle.features, bundle.records,
      RepMode::sampled_with(4096), false, drop, walks_b);
  for (std::size_t i = 0; i < exact.scores.size(); ++i) {
    CHECK(std::abs(exact.scores[i] - sampled.scores[i]) < 0.02);
  }
}
