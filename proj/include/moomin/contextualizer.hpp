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
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "moomin/encoders.hpp"
#include "moomin/error.hpp"
#include "moomin/graph.hpp"
#include "moomin/tensor.hpp"

namespace moomin {

/// Width of the scale-l block: drug encoding width at even scales, protein
/// encoding width at odd scales (bipartite alternation from a drug source).
inline std::size_t scale_width(int scale) {
  return scale % 2 == 0 ? kDrugEncodingDim : kProteinEncodingDim;
}

/// Total width of a flattened representation with scales 0..r.
inline std::size_t rep_width(int r) {
  std::size_t w = 0;
  for (int l = 0; l <= r; ++l) w += scale_width(l);
  return w;
}

/// Multi-scale drug representation: one block per scale l = 0..r, block 0
/// being the drug's own encoding.
struct MultiScaleRep {
  std::vector<Tensor> blocks;

  int max_scale() const { return static_cast<int>(blocks.size()) - 1; }
};

/// Caches vertex encodings for the duration of one forward pass so that a
/// vertex touched by many representations is encoded once per pass. The
/// cached tensors belong to the pass's tape; drop the context with the tape.
class EncodingContext {
 public:
  EncodingContext(Tape& tape, const DrugEncoderParams& drug_params,
                  const ProteinEncoderParams& protein_params,
                  const BipartiteGraph& graph, const FeatureStore& features)
      : tape_(tape),
        drug_params_(drug_params),
        protein_params_(protein_params),
        graph_(graph),
        features_(features) {}

  Tape& tape() { return tape_; }
  const BipartiteGraph& graph() const { return graph_; }

  Tensor drug_encoding(std::uint32_t drug) {
    auto it = drug_cache_.find(drug);
    if (it != drug_cache_.end()) return it->second;
    const FeaturizedMolecule* mol = features_.drug(drug);
    if (mol == nullptr) {
      throw DataError("no molecule available for drug '" +
                      graph_.drug_id(drug) + "'");
    }
    Tensor enc = encode_drug(tape_, drug_params_, mol->atom_features,
                             mol->norm_adjacency);
    drug_cache_.emplace(drug, enc);
    return enc;
  }

  Tensor protein_encoding(std::uint32_t protein) {
    auto it = protein_cache_.find(protein);
    if (it != protein_cache_.end()) return it->second;
    const Tensor* feats = features_.protein(protein);
    if (feats == nullptr) {
      throw DataError("no features available for protein '" +
                      graph_.protein_id(protein) + "'");
    }
    Tensor enc = encode_protein(tape_, protein_params_, *feats);
    protein_cache_.emplace(protein, enc);
    return enc;
  }

  Tensor vertex_encoding(VertexRef v) {
    return v.side == VertexSide::Drug ? drug_encoding(v.index)
                                      : protein_encoding(v.index);
  }

  void warn_isolated(std::uint32_t drug) {
    static std::mutex mutex;
    static std::set<std::string> warned;  // once per drug id per process
    std::lock_guard<std::mutex> lock(mutex);
    if (warned.insert(graph_.drug_id(drug)).second) {
      std::cerr << "moomin: warning: drug '" << graph_.drug_id(drug)
                << "' has no interactions; context blocks are zero\n";
    }
  }

 private:
  Tape& tape_;
  const DrugEncoderParams& drug_params_;
  const ProteinEncoderParams& protein_params_;
  const BipartiteGraph& graph_;
  const FeatureStore& features_;
  std::unordered_map<std::uint32_t, Tensor> drug_cache_;
  std::unordered_map<std::uint32_t, Tensor> protein_cache_;
};

/// Exact multi-scale representation: block l is the transition-probability
/// weighted sum of encodings of the vertices reachable in l steps. Empty
/// transition rows (isolated drug) yield zero blocks. Differentiable through
/// every touched encoding.
inline MultiScaleRep exact_rep(EncodingContext& ctx, std::uint32_t drug,
                               int max_scale) {
  if (max_scale < 0) throw ArgumentError("exact_rep: max scale must be >= 0");
  const BipartiteGraph& g = ctx.graph();
  MultiScaleRep rep;
  rep.blocks.reserve(max_scale + 1);
  rep.blocks.push_back(ctx.drug_encoding(drug));

  VertexSide side = VertexSide::Drug;
  std::map<std::uint32_t, double> dist{{drug, 1.0}};
  for (int l = 1; l <= max_scale; ++l) {
    dist = g.step_distribution(side, dist);
    side = side == VertexSide::Drug ? VertexSide::Protein : VertexSide::Drug;
    if (dist.empty()) {
      ctx.warn_isolated(drug);
      rep.blocks.push_back(Tensor::zeros(1, scale_width(l)));
      continue;
    }
    std::vector<Tensor> parts;
    std::vector<double> weights;
    parts.reserve(dist.size());
    weights.reserve(dist.size());
    for (const auto& [index, p] : dist) {
      parts.push_back(ctx.vertex_encoding(VertexRef{side, index}));
      weights.push_back(p);
    }
    rep.blocks.push_back(ctx.tape().linear_mix(parts, weights));
  }
  return rep;
}

/// Sampled multi-scale representation: the blockwise mean of `samples`
/// truncated random walks of length `max_scale` started at the drug. Each
/// walk contributes the encoding of the vertex it occupies at every scale;
/// walks that truncate pad the remaining scales with zeros. Gradients flow
/// only through encodings of vertices actually visited.
inline MultiScaleRep sample_rep(EncodingContext& ctx, std::uint32_t drug,
                                int max_scale, int samples, SplitMix64& rng) {
  if (max_scale < 0) throw ArgumentError("sample_rep: max scale must be >= 0");
  if (samples < 1) throw ArgumentError("sample_rep: need at least one sample");
  const BipartiteGraph& g = ctx.graph();
  MultiScaleRep rep;
  rep.blocks.reserve(max_scale + 1);
  rep.blocks.push_back(ctx.drug_encoding(drug));
  if (max_scale == 0) return rep;

  // Visit counts per scale; each walk owns a private stream derived from
  // (base, walk index) so parallel evaluation stays deterministic.
  std::vector<std::map<VertexRef, std::uint32_t>> counts(max_scale);
  const std::uint64_t base = rng.next();
  bool truncated = false;
  for (int walk = 0; walk < samples; ++walk) {
    SplitMix64 walker(derive_seed(base, "walk", static_cast<std::uint64_t>(walk)));
    VertexRef at{VertexSide::Drug, drug};
    for (int l = 1; l <= max_scale; ++l) {
      auto next = g.walk_step(at, walker);
      if (!next) {
        truncated = true;
        break;
      }
      at = *next;
      ++counts[l - 1][at];
    }
  }
  if (truncated) ctx.warn_isolated(drug);

  const double inv_s = 1.0 / static_cast<double>(samples);
  for (int l = 1; l <= max_scale; ++l) {
    const auto& scale_counts = counts[l - 1];
    if (scale_counts.empty()) {
      rep.blocks.push_back(Tensor::zeros(1, scale_width(l)));
      continue;
    }
    std::vector<Tensor> parts;
    std::vector<double> weights;
    parts.reserve(scale_counts.size());
    weights.reserve(scale_counts.size());
    for (const auto& [v, count] : scale_counts) {
      parts.push_back(ctx.vertex_encoding(v));
      weights.push_back(static_cast<double>(count) * inv_s);
    }
    rep.blocks.push_back(ctx.tape().linear_mix(parts, weights));
  }
  return rep;
}

/// Concatenates the blocks in scale order into one row of width rep_width(r).
inline Tensor flatten(Tape& tape, const MultiScaleRep& rep) {
  if (rep.blocks.empty()) throw ArgumentError("flatten: representation has no blocks");
  if (rep.blocks.size() == 1) return rep.blocks.front();
  return tape.concat_cols(rep.blocks);
}

}  // namespace moomin
