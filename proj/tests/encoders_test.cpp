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
#include <vector>

#include "moomin/encoders.hpp"
#include "test_helpers.hpp"

using namespace moomin;
using test::finite_difference;
using test::rel_err;

TEST_CASE("drug encoder shape and teleport-1 degeneracy", "[encoders]") {
  SplitMix64 rng(51);
  auto mol = parse_smiles("CC(O)CN");
  Tape tape;

  DrugEncoderParams full = DrugEncoderParams::init(rng, 10, 0.2);
  Tensor out = encode_drug(tape, full, mol);
  REQUIRE(out.rows() == 1);
  REQUIRE(out.cols() == kDrugEncodingDim);

  // alpha = 1 pins Z_k to Z_0; K = 0 skips propagation entirely. Both must
  // equal the unpropagated pooled MLP output bit for bit.
  DrugEncoderParams alpha_one = full;
  alpha_one.alpha = 1.0;
  DrugEncoderParams zero_iters = full;
  zero_iters.iterations = 0;
  Tensor a = encode_drug(tape, alpha_one, mol);
  Tensor b = encode_drug(tape, zero_iters, mol);
  for (std::size_t j = 0; j < a.cols(); ++j) {
    CHECK(a.values()[j] == b.values()[j]);
  }

  // single atom: mean, max and min pools all equal the one row
  Tensor single = encode_drug(tape, full, parse_smiles("O"));
  for (std::size_t j = 0; j < kDrugHiddenDim; ++j) {
    CHECK(single.values()[j] == single.values()[kDrugHiddenDim + j]);
    CHECK(single.values()[j] == single.values()[2 * kDrugHiddenDim + j]);
  }
}

TEST_CASE("drug encoder APPNP contraction", "[encoders]") {
  // The degree-scaled difference D^-1/2 (Z_{k+1} - Z_k) contracts by (1-alpha)
  // per iteration in the infinity norm; the plain norm contracts overall but
  // one step can exceed the factor on hub-heavy molecules.
  SplitMix64 rng(53);
  DrugEncoderParams params = DrugEncoderParams::init(rng, 0, 0.2);
  for (const char* smiles :
       {"CCCCCCCC", "CC(C)(C)CC", "C1CCCCC1CCO", "CC(C)(C)(C)"}) {
    MolecularGraph mol = parse_smiles(smiles);
    auto f = featurize(mol);
    const std::size_t n = f.atom_features.rows();

    Tape tape;
    Tensor h =
        tape.relu(tape.add(tape.matmul(f.atom_features, params.w1), params.b1));
    Tensor z0 = tape.add(tape.matmul(h, params.w2), params.b2);

    std::vector<double> scale(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      scale[i] = 1.0 / std::sqrt(static_cast<double>(mol.degree(i) + 1));
    }
    const double alpha = 0.2;
    Tensor z = tape.linear_mix({tape.matmul(f.norm_adjacency, z0), z0},
                               {1.0 - alpha, alpha});
    double prev_diff = -1.0;
    for (int k = 0; k < 8; ++k) {
      Tensor z_next = tape.linear_mix({tape.matmul(f.norm_adjacency, z), z0},
                                      {1.0 - alpha, alpha});
      double diff = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < kDrugHiddenDim; ++j) {
          diff = std::max(diff, scale[i] * std::abs(z_next.at(i, j) - z.at(i, j)));
        }
      }
      if (prev_diff >= 0.0) {
        CHECK(diff <= (1.0 - alpha) * prev_diff + 1e-12);
      }
      prev_diff = diff;
      z = z_next;
    }
  }
}

TEST_CASE("drug encoder is invariant to atom relabeling", "[encoders]") {
  SplitMix64 rng(57);
  DrugEncoderParams params = DrugEncoderParams::init(rng, 10, 0.2);

  // same molecule written from two different starting atoms
  auto original = parse_smiles("CC(O)N");
  auto relabeled = parse_smiles("OC(C)N");
  Tape tape;
  Tensor a = encode_drug(tape, params, original);
  Tensor b = encode_drug(tape, params, relabeled);
  for (std::size_t j = 0; j < a.cols(); ++j) {
    CHECK(a.values()[j] == Approx(b.values()[j]).margin(1e-12));
  }
}

TEST_CASE("drug encoder rejects wrong feature width", "[encoders]") {
  SplitMix64 rng(59);
  DrugEncoderParams params = DrugEncoderParams::init(rng);
  Tape tape;
  Tensor bad = Tensor::zeros(3, 7);
  Tensor adj = Tensor::zeros(3, 3);
  CHECK_THROWS_AS(encode_drug(tape, params, bad, adj), DimensionError);
}

TEST_CASE("protein encoder values and gradients", "[encoders]") {
  SplitMix64 rng(61);
  Tape tape;

  // zero parameters map everything to zero
  ProteinEncoderParams zeros;
  zeros.w1 = Tensor::zeros(6, kProteinHiddenDim, true);
  zeros.b1 = Tensor::zeros(1, kProteinHiddenDim, true);
  zeros.w2 = Tensor::zeros(kProteinHiddenDim, kProteinEncodingDim, true);
  zeros.b2 = Tensor::zeros(1, kProteinEncodingDim, true);
  Tensor out = encode_protein(tape, zeros, test::random_tensor(1, 6, rng));
  for (double v : out.values()) CHECK(v == 0.0);

  // identity weights: the encoder computes relu(relu(x))
  ProteinEncoderParams eye;
  std::vector<double> id(32 * 32, 0.0);
  for (int i = 0; i < 32; ++i) id[i * 32 + i] = 1.0;
  eye.w1 = Tensor::from_values(32, 32, id, true);
  eye.b1 = Tensor::zeros(1, 32, true);
  eye.w2 = Tensor::from_values(32, 32, id, true);
  eye.b2 = Tensor::zeros(1, 32, true);
  Tensor x = test::random_tensor(1, 32, rng);
  Tensor enc = encode_protein(tape, eye, x);
  for (std::size_t j = 0; j < 32; ++j) {
    CHECK(enc.values()[j] == std::max(0.0, x.values()[j]));
  }

  // width mismatch
  ProteinEncoderParams p6 = ProteinEncoderParams::init(6, rng);
  CHECK_THROWS_AS(encode_protein(tape, p6, test::random_tensor(1, 5, rng)),
                  DimensionError);

  // gradient vs central differences
  Tensor feat = test::random_tensor(1, 6, rng);
  auto loss = [&]() {
    Tape t;
    return t.sum_all(encode_protein(t, p6, feat)).scalar();
  };
  Tape t2;
  t2.backward(t2.sum_all(encode_protein(t2, p6, feat)));
  for (Tensor param : {p6.w1, p6.b1, p6.w2, p6.b2}) {
    const auto fd = finite_difference(param, loss);
    for (std::size_t i = 0; i < param.size(); ++i) {
      CHECK(rel_err(param.grad().empty() ? 0.0 : param.grad()[i], fd[i]) < 1e-4);
    }
  }
}

TEST_CASE("cell embedding lookup", "[encoders]") {
  SplitMix64 rng(67);
  CellEmbedding emb = CellEmbedding::init({"c1", "c2", "c3"}, rng);

  // GloRot bound
  const double bound = std::sqrt(6.0 / (3.0 + kCellEmbeddingDim));
  for (double v : emb.table.values()) {
    CHECK(std::abs(v) <= bound);
  }

  Tape tape;
  Tensor first = encode_cell(tape, emb, "c2");
  Tensor second = encode_cell(tape, emb, "c2");
  REQUIRE(first.cols() == kCellEmbeddingDim);
  for (std::size_t j = 0; j < first.cols(); ++j) {
    CHECK(first.values()[j] == second.values()[j]);
  }

  CHECK_THROWS_AS(encode_cell(tape, emb, "unseen"), LookupError);

  // gradient flows only into the looked-up row
  Tape t2;
  t2.backward(t2.sum_all(encode_cell(t2, emb, "c2")));
  for (std::size_t j = 0; j < kCellEmbeddingDim; ++j) {
    CHECK(emb.table.grad_at(0, j) == 0.0);
    CHECK(emb.table.grad_at(1, j) == 1.0);
    CHECK(emb.table.grad_at(2, j) == 0.0);
  }
}

TEST_CASE("encoder outputs stay finite for extreme finite inputs",
          "[encoders]") {
  SplitMix64 rng(71);
  ProteinEncoderParams params = ProteinEncoderParams::init(4, rng);
  Tape tape;
  Tensor big = Tensor::row({1e8, -1e8, 1e6, -1e6});
  for (double v : encode_protein(tape, params, big).values()) {
    CHECK(std::isfinite(v));
  }
}
