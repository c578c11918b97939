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

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "moomin/error.hpp"
#include "moomin/graph.hpp"
#include "moomin/molgraph.hpp"
#include "moomin/rng.hpp"
#include "moomin/tensor.hpp"

namespace moomin {

inline constexpr std::size_t kDrugHiddenDim = 32;
inline constexpr std::size_t kDrugEncodingDim = 3 * kDrugHiddenDim;  // mean||max||min
inline constexpr std::size_t kProteinHiddenDim = 32;
inline constexpr std::size_t kProteinEncodingDim = 32;
inline constexpr std::size_t kCellEmbeddingDim = 16;

/// GloRot (Glorot uniform) initialisation: entries drawn uniformly from
/// +-sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot_init(std::size_t fan_in, std::size_t fan_out,
                          SplitMix64& rng, bool requires_grad = true) {
  const double bound =
      std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> values(fan_in * fan_out);
  for (double& v : values) v = rng.next_uniform(-bound, bound);
  return Tensor::from_values(fan_in, fan_out, std::move(values), requires_grad);
}

/// Molecular drug encoder parameters: per-atom two-layer MLP (16->32->32,
/// ReLU between the layers) followed by APPNP propagation over the molecule
/// adjacency with `iterations` steps and teleport probability `alpha`.
struct DrugEncoderParams {
  Tensor w1, b1;  // 16->32
  Tensor w2, b2;  // 32->32
  int iterations = 10;
  double alpha = 0.2;

  static DrugEncoderParams init(SplitMix64& rng, int iterations = 10,
                                double alpha = 0.2) {
    if (!(alpha > 0.0 && alpha <= 1.0)) {
      throw ArgumentError("drug encoder: alpha must lie in (0, 1]");
    }
    if (iterations < 0) {
      throw ArgumentError("drug encoder: iterations must be >= 0");
    }
    DrugEncoderParams p;
    p.w1 = glorot_init(kAtomFeatureDim, kDrugHiddenDim, rng);
    p.b1 = Tensor::zeros(1, kDrugHiddenDim, true);
    p.w2 = glorot_init(kDrugHiddenDim, kDrugHiddenDim, rng);
    p.b2 = Tensor::zeros(1, kDrugHiddenDim, true);
    p.iterations = iterations;
    p.alpha = alpha;
    return p;
  }
};

/// Protein encoder parameters: in_dim->32 hidden layer and 32->32 output
/// layer, ReLU after each.
struct ProteinEncoderParams {
  Tensor w1, b1;
  Tensor w2, b2;

  static ProteinEncoderParams init(std::size_t in_dim, SplitMix64& rng) {
    ProteinEncoderParams p;
    p.w1 = glorot_init(in_dim, kProteinHiddenDim, rng);
    p.b1 = Tensor::zeros(1, kProteinHiddenDim, true);
    p.w2 = glorot_init(kProteinHiddenDim, kProteinEncodingDim, rng);
    p.b2 = Tensor::zeros(1, kProteinEncodingDim, true);
    return p;
  }

  std::size_t in_dim() const { return w1.rows(); }
};

/// Trainable per-cell embedding table. Cell lines outside the registered set
/// cannot be encoded (no induction for cells).
struct CellEmbedding {
  Tensor table;  // num_cells x 16
  std::vector<std::string> ids;
  std::unordered_map<std::string, std::size_t> index;

  static CellEmbedding init(const std::vector<std::string>& cell_ids,
                            SplitMix64& rng) {
    if (cell_ids.empty()) {
      throw ArgumentError("cell embedding: need at least one cell id");
    }
    CellEmbedding e;
    e.table = glorot_init(cell_ids.size(), kCellEmbeddingDim, rng);
    e.ids = cell_ids;
    for (std::size_t i = 0; i < cell_ids.size(); ++i) {
      if (!e.index.emplace(cell_ids[i], i).second) {
        throw ArgumentError("cell embedding: duplicate cell id '" +
                            cell_ids[i] + "'");
      }
    }
    return e;
  }

  std::size_t row_of(const std::string& cell_id) const {
    auto it = index.find(cell_id);
    if (it == index.end()) {
      throw LookupError("unknown cell '" + cell_id +
                        "' (cell lines cannot be encoded inductively)");
    }
    return it->second;
  }
};

/// Per-atom MLP then predict-then-propagate smoothing
///   Z_{k+1} = (1 - alpha) * A_mol * Z_k + alpha * Z_0,
/// pooled column-wise by mean, max and min and concatenated to a 1x96 row.
inline Tensor encode_drug(Tape& tape, const DrugEncoderParams& params,
                          const Tensor& atom_features,
                          const Tensor& norm_adjacency) {
  if (atom_features.cols() != params.w1.rows()) {
    throw DimensionError("encode_drug: atom features have width " +
                         std::to_string(atom_features.cols()) +
                         " but the MLP expects " +
                         std::to_string(params.w1.rows()));
  }
  Tensor h = tape.relu(tape.add(tape.matmul(atom_features, params.w1), params.b1));
  Tensor z0 = tape.add(tape.matmul(h, params.w2), params.b2);
  Tensor z = z0;
  for (int k = 0; k < params.iterations; ++k) {
    z = tape.linear_mix({tape.matmul(norm_adjacency, z), z0},
                        {1.0 - params.alpha, params.alpha});
  }
  return tape.concat_cols({tape.pool(z, PoolKind::Mean),
                           tape.pool(z, PoolKind::Max),
                           tape.pool(z, PoolKind::Min)});
}

inline Tensor encode_drug(Tape& tape, const DrugEncoderParams& params,
                          const MolecularGraph& mol) {
  const FeaturizedMolecule f = featurize(mol);
  return encode_drug(tape, params, f.atom_features, f.norm_adjacency);
}

inline Tensor encode_protein(Tape& tape, const ProteinEncoderParams& params,
                             const Tensor& features) {
  if (features.rows() != 1 || features.cols() != params.in_dim()) {
    throw DimensionError("encode_protein: features are " +
                         std::to_string(features.rows()) + "x" +
                         std::to_string(features.cols()) +
                         " but the encoder expects 1x" +
                         std::to_string(params.in_dim()));
  }
  Tensor h = tape.relu(tape.add(tape.matmul(features, params.w1), params.b1));
  return tape.relu(tape.add(tape.matmul(h, params.w2), params.b2));
}

inline Tensor encode_cell(Tape& tape, const CellEmbedding& emb,
                          const std::string& cell_id) {
  return tape.row_lookup(emb.table, emb.row_of(cell_id));
}

/// Featurized molecules and protein feature rows aligned to the vertex
/// indices of a BipartiteGraph. All tensors are constants, so a store can be
/// shared across tapes and threads.
class FeatureStore {
 public:
  static FeatureStore build(
      const BipartiteGraph& graph,
      const std::map<std::string, MolecularGraph>& molecules,
      const std::map<std::string, std::vector<double>>& protein_features) {
    FeatureStore store;
    store.drugs_.resize(graph.drug_count());
    store.atom_counts_.assign(graph.drug_count(), 0);
    store.proteins_.resize(graph.protein_count());
    for (const auto& [id, mol] : molecules) {
      if (auto d = graph.find_drug(id)) {
        store.drugs_[*d] = featurize(mol);
        store.atom_counts_[*d] = mol.atom_count();
      }
    }
    for (const auto& [id, row] : protein_features) {
      if (auto p = graph.find_protein(id)) {
        if (store.protein_dim_ == 0) {
          store.protein_dim_ = row.size();
        } else if (store.protein_dim_ != row.size()) {
          throw DataError("protein feature rows have widths " +
                          std::to_string(store.protein_dim_) + " and " +
                          std::to_string(row.size()));
        }
        store.proteins_[*p] = Tensor::row(row);
      }
    }
    return store;
  }

  const FeaturizedMolecule* drug(std::uint32_t index) const {
    if (index >= drugs_.size() || !drugs_[index].has_value()) return nullptr;
    return &*drugs_[index];
  }

  const Tensor* protein(std::uint32_t index) const {
    if (index >= proteins_.size() || !proteins_[index].has_value()) {
      return nullptr;
    }
    return &*proteins_[index];
  }

  std::size_t atom_count(std::uint32_t drug_index) const {
    return drug_index < atom_counts_.size() ? atom_counts_[drug_index] : 0;
  }

  std::size_t protein_dim() const { return protein_dim_; }

 private:
  std::vector<std::optional<FeaturizedMolecule>> drugs_;
  std::vector<std::size_t> atom_counts_;
  std::vector<std::optional<Tensor>> proteins_;
  std::size_t protein_dim_ = 0;
};

}  // namespace moomin
