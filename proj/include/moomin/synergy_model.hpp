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

#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "moomin/contextualizer.hpp"
#include "moomin/encoders.hpp"
#include "moomin/error.hpp"
#include "moomin/graph.hpp"
#include "moomin/rng.hpp"
#include "moomin/tensor.hpp"

namespace moomin {

inline constexpr std::size_t kHeadHiddenDim = 16;

/// One labeled entry of the drug pair synergy set.
struct SynergyRecord {
  std::string drug_a;
  std::string drug_b;
  std::string cell;
  int label = 0;  // 1 synergy, 0 antagonism
};

/// Synergy scoring head: single hidden layer with ReLU and dropout, then a
/// final neuron with sigmoid. Input width is 2 * rep_width(r) + 16.
struct HeadParams {
  Tensor w1, b1;
  Tensor w2, b2;
  double dropout_p = 0.5;

  static HeadParams init(int r, SplitMix64& rng, double dropout_p = 0.5) {
    const std::size_t in = 2 * rep_width(r) + kCellEmbeddingDim;
    HeadParams h;
    h.w1 = glorot_init(in, kHeadHiddenDim, rng);
    h.b1 = Tensor::zeros(1, kHeadHiddenDim, true);
    h.w2 = glorot_init(kHeadHiddenDim, 1, rng);
    h.b2 = Tensor::zeros(1, 1, true);
    h.dropout_p = dropout_p;
    return h;
  }

  std::size_t in_dim() const { return w1.rows(); }
};

/// [m_d || m_d' || h_c]: ordered concatenation of both flattened drug
/// representations and the cell embedding. Order is preserved; scoring is
/// not assumed symmetric in the pair.
inline Tensor pair_cell_rep(Tape& tape, const MultiScaleRep& a,
                            const MultiScaleRep& b, const Tensor& cell) {
  if (a.blocks.size() != b.blocks.size()) {
    throw DimensionError("pair_cell_rep: representations have " +
                         std::to_string(a.blocks.size()) + " and " +
                         std::to_string(b.blocks.size()) + " scales");
  }
  return tape.concat_cols({flatten(tape, a), flatten(tape, b), cell});
}

/// Probability that the pair is synergistic on the cell. Dropout is active
/// only while training.
inline Tensor score(Tape& tape, const HeadParams& head, const Tensor& pair_rep,
                    bool training, SplitMix64& rng) {
  Tensor h = tape.relu(tape.add(tape.matmul(pair_rep, head.w1), head.b1));
  h = tape.dropout(h, head.dropout_p, training, rng);
  return tape.sigmoid(tape.add(tape.matmul(h, head.w2), head.b2));
}

/// Binary cross-entropy -[y log p + (1-y) log(1-p)] with p clamped away from
/// the boundary; finite for p in {0, 1}.
inline Tensor bce(Tape& tape, int label, const Tensor& prob) {
  if (label != 0 && label != 1) {
    throw ArgumentError("bce: label must be 0 or 1, got " +
                        std::to_string(label));
  }
  return tape.bce(static_cast<double>(label), prob);
}

/// How drug representations are formed: the exact matrix-power route or the
/// sampled truncated-random-walk route with `samples` walks.
struct RepMode {
  bool sampled = false;
  int samples = 128;

  static RepMode exact() { return RepMode{false, 0}; }
  static RepMode sampled_with(int samples) { return RepMode{true, samples}; }
};

struct ModelConfig {
  int r = 1;
  std::size_t protein_dim = 0;
  std::vector<std::string> cell_ids;
  int appnp_iterations = 10;
  double appnp_alpha = 0.2;
  double dropout = 0.5;
};

/// Named handle to one trainable tensor. `decay` marks parameters subject to
/// weight decay (weight matrices; biases and the cell table are exempt).
struct ParamRef {
  std::string name;
  Tensor tensor;
  bool decay = false;
};

/// The full model: drug/protein/cell encoders plus the scoring head.
struct Model {
  ModelConfig config;
  DrugEncoderParams drug;
  ProteinEncoderParams protein;
  CellEmbedding cells;
  HeadParams head;

  static Model init(const ModelConfig& config, std::uint64_t seed) {
    if (config.protein_dim == 0) {
      throw ArgumentError("model: protein feature dimension must be positive");
    }
    if (config.r < 0) throw ArgumentError("model: r must be >= 0");
    Model m;
    m.config = config;
    SplitMix64 rng(derive_seed(seed, "init"));
    m.drug = DrugEncoderParams::init(rng, config.appnp_iterations,
                                     config.appnp_alpha);
    m.protein = ProteinEncoderParams::init(config.protein_dim, rng);
    m.cells = CellEmbedding::init(config.cell_ids, rng);
    m.head = HeadParams::init(config.r, rng, config.dropout);
    return m;
  }

  std::vector<ParamRef> parameters() const {
    return {
        {"drug.w1", drug.w1, true},       {"drug.b1", drug.b1, false},
        {"drug.w2", drug.w2, true},       {"drug.b2", drug.b2, false},
        {"protein.w1", protein.w1, true}, {"protein.b1", protein.b1, false},
        {"protein.w2", protein.w2, true}, {"protein.b2", protein.b2, false},
        {"cells.table", cells.table, false},
        {"head.w1", head.w1, true},       {"head.b1", head.b1, false},
        {"head.w2", head.w2, true},       {"head.b2", head.b2, false},
    };
  }
};

struct BatchResult {
  Tensor loss;                 // mean over the batch, on the tape
  std::vector<double> scores;  // per-record probabilities
};

/// Mini-batch forward pass: representations for both drugs (cached per drug
/// within the batch, one sampled draw per drug), pair-cell concatenation,
/// head score and per-record loss, averaged over the batch.
inline BatchResult batch_forward(Tape& tape, Model& model,
                                 const BipartiteGraph& graph,
                                 const FeatureStore& features,
                                 std::span<const SynergyRecord> batch,
                                 RepMode mode, bool training,
                                 SplitMix64& dropout_rng,
                                 SplitMix64& walk_rng) {
  if (batch.empty()) throw ArgumentError("batch_forward: empty batch");

  // Validate all records first so the error can list every offender.
  std::set<std::string> missing;
  for (const SynergyRecord& rec : batch) {
    if (!graph.find_drug(rec.drug_a)) missing.insert("drug " + rec.drug_a);
    if (!graph.find_drug(rec.drug_b)) missing.insert("drug " + rec.drug_b);
    if (!model.cells.index.count(rec.cell)) missing.insert("cell " + rec.cell);
  }
  if (!missing.empty()) {
    std::ostringstream os;
    os << "batch_forward: unresolvable references:";
    for (const std::string& m : missing) os << " " << m;
    throw DataError(os.str());
  }

  EncodingContext ctx(tape, model.drug, model.protein, graph, features);
  std::unordered_map<std::uint32_t, MultiScaleRep> rep_cache;
  auto rep_of = [&](const std::string& drug_id) -> const MultiScaleRep& {
    const std::uint32_t d = *graph.find_drug(drug_id);
    auto it = rep_cache.find(d);
    if (it != rep_cache.end()) return it->second;
    MultiScaleRep rep =
        mode.sampled
            ? sample_rep(ctx, d, model.config.r, mode.samples, walk_rng)
            : exact_rep(ctx, d, model.config.r);
    return rep_cache.emplace(d, std::move(rep)).first->second;
  };

  BatchResult result;
  std::vector<Tensor> losses;
  losses.reserve(batch.size());
  result.scores.reserve(batch.size());
  for (const SynergyRecord& rec : batch) {
    const MultiScaleRep& rep_a = rep_of(rec.drug_a);
    const MultiScaleRep& rep_b = rep_of(rec.drug_b);
    Tensor cell = encode_cell(tape, model.cells, rec.cell);
    Tensor pair = pair_cell_rep(tape, rep_a, rep_b, cell);
    Tensor prob = score(tape, model.head, pair, training, dropout_rng);
    result.scores.push_back(prob.scalar());
    losses.push_back(bce(tape, rec.label, prob));
  }
  result.loss = tape.linear_mix(
      losses,
      std::vector<double>(losses.size(), 1.0 / static_cast<double>(losses.size())));
  return result;
}

}  // namespace moomin
