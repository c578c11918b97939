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
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "moomin/error.hpp"
#include "moomin/rng.hpp"

namespace moomin {

enum class VertexSide { Drug, Protein };

/// Handle into a BipartiteGraph: side plus side-local index.
struct VertexRef {
  VertexSide side{};
  std::uint32_t index = 0;

  bool operator==(const VertexRef&) const = default;
  bool operator<(const VertexRef& o) const {
    if (side != o.side) return side < o.side;
    return index < o.index;
  }
};

/// One row of the l-step transition structure: the distribution over vertices
/// a uniform walk started at `source` occupies after `scale` steps. Either
/// the entries sum to 1 or the row is empty (isolated source, scale >= 1).
struct TransitionRow {
  VertexRef source{};
  int scale = 0;
  std::map<VertexRef, double> entries;

  bool empty() const { return entries.empty(); }
};

/// Undirected bipartite drug-protein interaction graph. Edges join only
/// drugs to proteins; adjacency is symmetric, deduplicated, loop-free.
/// Vertex order is first-appearance order. Immutable once built; safe for
/// concurrent readers.
class BipartiteGraph {
 public:
  static BipartiteGraph build(
      const std::vector<std::pair<std::string, std::string>>& edges) {
    BipartiteGraph g;
    for (const auto& [drug_id, protein_id] : edges) {
      g.add_edge(drug_id, protein_id);
    }
    return g;
  }

  std::uint32_t add_drug(const std::string& id) {
    check_id(id);
    if (protein_index_.count(id)) {
      throw DataError("bipartiteness violation: id '" + id +
                      "' already used as a protein");
    }
    auto it = drug_index_.find(id);
    if (it != drug_index_.end()) return it->second;
    const auto idx = static_cast<std::uint32_t>(drug_ids_.size());
    drug_index_.emplace(id, idx);
    drug_ids_.push_back(id);
    drug_adj_.emplace_back();
    return idx;
  }

  std::uint32_t add_protein(const std::string& id) {
    check_id(id);
    if (drug_index_.count(id)) {
      throw DataError("bipartiteness violation: id '" + id +
                      "' already used as a drug");
    }
    auto it = protein_index_.find(id);
    if (it != protein_index_.end()) return it->second;
    const auto idx = static_cast<std::uint32_t>(protein_ids_.size());
    protein_index_.emplace(id, idx);
    protein_ids_.push_back(id);
    protein_adj_.emplace_back();
    return idx;
  }

  void add_edge(const std::string& drug_id, const std::string& protein_id) {
    const std::uint32_t d = add_drug(drug_id);
    const std::uint32_t p = add_protein(protein_id);
    for (std::uint32_t q : drug_adj_[d]) {
      if (q == p) return;  // duplicate edge
    }
    drug_adj_[d].push_back(p);
    protein_adj_[p].push_back(d);
  }

  std::size_t drug_count() const { return drug_ids_.size(); }
  std::size_t protein_count() const { return protein_ids_.size(); }
  std::size_t vertex_count() const { return drug_count() + protein_count(); }

  std::size_t edge_count() const {
    std::size_t m = 0;
    for (const auto& a : drug_adj_) m += a.size();
    return m;
  }

  const std::string& drug_id(std::uint32_t i) const { return drug_ids_.at(i); }
  const std::string& protein_id(std::uint32_t i) const {
    return protein_ids_.at(i);
  }

  const std::string& id_of(VertexRef v) const {
    return v.side == VertexSide::Drug ? drug_id(v.index) : protein_id(v.index);
  }

  std::optional<std::uint32_t> find_drug(const std::string& id) const {
    auto it = drug_index_.find(id);
    if (it == drug_index_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<std::uint32_t> find_protein(const std::string& id) const {
    auto it = protein_index_.find(id);
    if (it == protein_index_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<VertexRef> find_vertex(const std::string& id) const {
    if (auto d = find_drug(id)) return VertexRef{VertexSide::Drug, *d};
    if (auto p = find_protein(id)) return VertexRef{VertexSide::Protein, *p};
    return std::nullopt;
  }

  VertexRef vertex(const std::string& id) const {
    auto v = find_vertex(id);
    if (!v) throw LookupError("unknown vertex '" + id + "'");
    return *v;
  }

  /// Neighbors of a vertex, in insertion order (sorted by the insertion order
  /// of the opposite side's vertices, which fixes sampling determinism).
  const std::vector<std::uint32_t>& neighbors(VertexRef v) const {
    if (v.side == VertexSide::Drug) {
      if (v.index >= drug_adj_.size()) throw LookupError("unknown drug vertex");
      return drug_adj_[v.index];
    }
    if (v.index >= protein_adj_.size()) {
      throw LookupError("unknown protein vertex");
    }
    return protein_adj_[v.index];
  }

  std::size_t degree(VertexRef v) const { return neighbors(v).size(); }

  /// One uniform walk step from `at`; nullopt when the walk truncates at a
  /// zero-degree vertex.
  std::optional<VertexRef> walk_step(VertexRef at, SplitMix64& rng) const {
    const auto& adj = neighbors(at);
    if (adj.empty()) return std::nullopt;
    const std::uint32_t pick = adj[rng.next_below(adj.size())];
    return VertexRef{at.side == VertexSide::Drug ? VertexSide::Protein
                                                 : VertexSide::Drug,
                     pick};
  }

  /// Advances a sparse distribution by one uniform-walk step. Input entries
  /// must all lie on `side`; the result lies on the opposite side. Mass at
  /// zero-degree vertices is dropped (only the isolated source case).
  std::map<std::uint32_t, double> step_distribution(
      VertexSide side, const std::map<std::uint32_t, double>& dist) const {
    std::map<std::uint32_t, double> next;
    const auto& adj = side == VertexSide::Drug ? drug_adj_ : protein_adj_;
    for (const auto& [v, p] : dist) {
      const auto& nbrs = adj.at(v);
      if (nbrs.empty()) continue;
      const double w = p / static_cast<double>(nbrs.size());
      for (std::uint32_t u : nbrs) next[u] += w;
    }
    return next;
  }

  /// l-step transition distribution of the uniform walk via iterated sparse
  /// row-vector products with the row-normalized adjacency. Never forms the
  /// dense matrix power.
  TransitionRow transition_row(VertexRef source, int scale) const {
    if (scale < 0) throw ArgumentError("transition_row: scale must be >= 0");
    neighbors(source);  // validates the vertex
    TransitionRow row;
    row.source = source;
    row.scale = scale;
    if (scale == 0) {
      row.entries[source] = 1.0;
      return row;
    }
    VertexSide side = source.side;
    std::map<std::uint32_t, double> cur{{source.index, 1.0}};
    for (int l = 0; l < scale; ++l) {
      cur = step_distribution(side, cur);
      side = side == VertexSide::Drug ? VertexSide::Protein : VertexSide::Drug;
      if (cur.empty()) return row;  // isolated source, empty row
    }
    for (const auto& [idx, p] : cur) {
      row.entries[VertexRef{side, idx}] = p;
    }
    return row;
  }

  TransitionRow transition_row(const std::string& source_id, int scale) const {
    return transition_row(vertex(source_id), scale);
  }

 private:
  static void check_id(const std::string& id) {
    if (id.empty()) throw ArgumentError("vertex id must be non-empty");
  }

  std::vector<std::string> drug_ids_;
  std::vector<std::string> protein_ids_;
  std::unordered_map<std::string, std::uint32_t> drug_index_;
  std::unordered_map<std::string, std::uint32_t> protein_index_;
  std::vector<std::vector<std::uint32_t>> drug_adj_;
  std::vector<std::vector<std::uint32_t>> protein_adj_;
};

}  // namespace moomin
