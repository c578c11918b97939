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

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "moomin/dataio.hpp"
#include "moomin/error.hpp"
#include "moomin/graph.hpp"
#include "moomin/molgraph.hpp"
#include "moomin/rng.hpp"
#include "moomin/synergy_model.hpp"

namespace moomin {

enum class PlantedRule { SharedProtein, Molecular, Mixed };

inline PlantedRule planted_rule_from_name(const std::string& name) {
  if (name == "shared-protein") return PlantedRule::SharedProtein;
  if (name == "molecular") return PlantedRule::Molecular;
  if (name == "mixed") return PlantedRule::Mixed;
  throw ArgumentError("unknown planted rule '" + name +
                      "' (want shared-protein, molecular or mixed)");
}

inline std::string planted_rule_name(PlantedRule rule) {
  switch (rule) {
    case PlantedRule::SharedProtein: return "shared-protein";
    case PlantedRule::Molecular: return "molecular";
    case PlantedRule::Mixed: return "mixed";
  }
  return "?";
}

struct SynthSpec {
  int n_drugs = 30;
  int n_proteins = 12;
  int n_cells = 4;
  double edge_prob = 0.3;
  int n_records = 600;
  PlantedRule planted_rule = PlantedRule::SharedProtein;
  double noise_rate = 0.02;
  std::uint64_t seed = 7;
  int protein_dim = 8;
  int overlap_threshold = 1;      // shared targets needed for a positive
  int molsize_boundary = 30;      // atoms at or above count as "large"

  void validate() const {
    if (n_drugs < 1 || n_proteins < 1 || n_cells < 1 || n_records < 1) {
      throw ArgumentError("synth: counts must be >= 1");
    }
    if (!(edge_prob >= 0.0 && edge_prob <= 1.0)) {
      throw ArgumentError("synth: edge_prob must lie in [0, 1]");
    }
    if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) {
      throw ArgumentError("synth: noise_rate must lie in [0, 1]");
    }
    if (protein_dim < 1) throw ArgumentError("synth: protein_dim must be >= 1");
  }
};

/// A protein belongs to a cell line's active target set iff the fnv1a hash of
/// "<cell>|<protein>" is even. Pure function of the emitted ids, so labels
/// can be re-derived from the files alone.
inline bool protein_active_for_cell(const std::string& cell_id,
                                    const std::string& protein_id) {
  return detail::fnv1a(cell_id + "|" + protein_id) % 2 == 0;
}

/// shared-protein rule: positive iff the two drugs share at least `threshold`
/// interaction partners inside the cell's active target set. Requires scale-1
/// context to express.
inline bool shared_protein_rule(const BipartiteGraph& graph,
                                const std::string& drug_a,
                                const std::string& drug_b,
                                const std::string& cell_id, int threshold = 1) {
  const auto a = graph.find_drug(drug_a);
  const auto b = graph.find_drug(drug_b);
  if (!a || !b) return false;
  std::set<std::uint32_t> na;
  for (std::uint32_t p : graph.neighbors(VertexRef{VertexSide::Drug, *a})) {
    na.insert(p);
  }
  int shared_active = 0;
  for (std::uint32_t p : graph.neighbors(VertexRef{VertexSide::Drug, *b})) {
    if (na.count(p) &&
        protein_active_for_cell(cell_id, graph.protein_id(p))) {
      ++shared_active;
    }
  }
  return shared_active >= threshold;
}

/// molecular rule: positive iff both molecules fall in the same size class
/// (atom count >= boundary is "large"). Depends only on the molecules, so a
/// scale-0 model can express it.
inline bool molecular_rule(std::size_t atoms_a, std::size_t atoms_b,
                           int boundary = 30) {
  return (atoms_a >= static_cast<std::size_t>(boundary)) ==
         (atoms_b >= static_cast<std::size_t>(boundary));
}

namespace detail {

/// Emits one molecule as subset SMILES: a DFS over the spanning tree with
/// branch parentheses for all but the last child, plus ring-closure digits
/// for the extra edges. Whichever ring endpoint the DFS reaches first opens
/// the ring; the bond order symbol is attached to one endpoint only, which
/// the parser accepts ("one end default").
inline std::string molecule_to_smiles(const MolecularGraph& mol,
                                      const std::vector<Bond>& tree,
                                      const std::vector<Bond>& rings) {
  const std::size_t n = mol.atom_count();
  std::vector<std::vector<std::pair<std::uint32_t, int>>> children(n);
  for (const Bond& b : tree) children[b.a].emplace_back(b.b, b.order);

  std::map<std::uint32_t, std::vector<std::pair<int, int>>> ring_marks;
  int next_ring = 1;
  for (const Bond& b : rings) {
    ring_marks[b.a].emplace_back(next_ring, b.order);
    ring_marks[b.b].emplace_back(next_ring, 0);
    ++next_ring;
  }
  auto bond_token = [](int order) {
    return order == 2 ? "=" : (order == 3 ? "#" : "");
  };

  std::ostringstream out;
  auto emit_atom = [&](std::uint32_t atom) {
    out << element_symbol(mol.atoms[atom]);
    auto it = ring_marks.find(atom);
    if (it == ring_marks.end()) return;
    for (const auto& [number, order] : it->second) {
      out << bond_token(order);
      if (number < 10) {
        out << number;
      } else {
        out << '%' << number / 10 << number % 10;
      }
    }
  };
  std::function<void(std::uint32_t)> emit_subtree = [&](std::uint32_t atom) {
    emit_atom(atom);
    const auto& kids = children[atom];
    for (std::size_t k = 0; k < kids.size(); ++k) {
      const bool last = k + 1 == kids.size();
      if (!last) out << '(';
      out << bond_token(kids[k].second);
      emit_subtree(kids[k].first);
      if (!last) out << ')';
    }
  };
  emit_subtree(0);
  return out.str();
}

}  // namespace detail

/// In-memory result of the generator; write_synth_files() serialises it.
struct SynthData {
  std::vector<std::string> drug_ids;
  std::vector<std::string> protein_ids;
  std::vector<CellInfo> cells;
  std::vector<std::pair<std::string, std::string>> edges;
  std::map<std::string, MolecularGraph> molecules;
  std::map<std::string, std::string> smiles;  // drug id -> emitted string
  std::map<std::string, std::vector<double>> protein_features;
  std::vector<SynergyRecord> records;
  SynthSpec spec;
};

/// Random molecule over the SMILES subset: a uniform random spanning tree
/// with weighted random elements and bond orders, plus up to two extra ring
/// edges. `atoms` must be >= 1.
inline std::pair<MolecularGraph, std::string> random_molecule(int atoms,
                                                              SplitMix64& rng) {
  MolecularGraph mol;
  std::vector<Bond> tree, rings;
  for (int i = 0; i < atoms; ++i) {
    const std::uint64_t roll = rng.next_below(100);
    Element e = Element::C;
    if (roll < 55) e = Element::C;
    else if (roll < 68) e = Element::N;
    else if (roll < 81) e = Element::O;
    else if (roll < 87) e = Element::S;
    else if (roll < 90) e = Element::P;
    else if (roll < 93) e = Element::F;
    else if (roll < 95) e = Element::Cl;
    else if (roll < 97) e = Element::Br;
    else if (roll < 99) e = Element::B;
    else e = Element::I;
    mol.atoms.push_back(e);
    if (i > 0) {
      const auto parent = static_cast<std::uint32_t>(rng.next_below(i));
      const std::uint64_t oroll = rng.next_below(100);
      const int order = oroll < 80 ? 1 : (oroll < 95 ? 2 : 3);
      tree.push_back(Bond{parent, static_cast<std::uint32_t>(i), order});
      mol.bonds.push_back(tree.back());
    }
  }
  if (atoms >= 4) {
    const int extra = static_cast<int>(rng.next_below(3));  // 0..2 ring edges
    for (int k = 0; k < extra && static_cast<int>(rings.size()) < 9; ++k) {
      const auto a = static_cast<std::uint32_t>(rng.next_below(atoms));
      const auto b = static_cast<std::uint32_t>(rng.next_below(atoms));
      if (a == b) continue;
      bool duplicate = false;
      for (const Bond& e : mol.bonds) {
        if ((e.a == a && e.b == b) || (e.a == b && e.b == a)) {
          duplicate = true;
          break;
        }
      }
      if (duplicate) continue;
      // In DFS order the smaller preorder index must open the ring; with
      // parent < child tree construction, preorder follows atom index.
      const Bond ring{std::min(a, b), std::max(a, b), 1};
      rings.push_back(ring);
      mol.bonds.push_back(ring);
    }
  }
  std::string smiles = detail::molecule_to_smiles(mol, tree, rings);
  return {std::move(mol), std::move(smiles)};
}

inline SynthData synth_generate(const SynthSpec& spec) {
  spec.validate();
  SynthData data;
  data.spec = spec;

  auto pad = [](int value, int width) {
    std::string s = std::to_string(value);
    while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
    return s;
  };
  for (int i = 0; i < spec.n_drugs; ++i) data.drug_ids.push_back("D" + pad(i, 3));
  for (int i = 0; i < spec.n_proteins; ++i) {
    data.protein_ids.push_back("P" + pad(i, 3));
  }
  static const char* kTissues[] = {"lung", "breast", "colon",
                                   "skin", "blood",  "ovary"};
  for (int i = 0; i < spec.n_cells; ++i) {
    data.cells.push_back(CellInfo{"C" + pad(i, 2), kTissues[i % 6]});
  }

  SplitMix64 graph_rng(derive_seed(spec.seed, "synth-graph"));
  for (const std::string& d : data.drug_ids) {
    for (const std::string& p : data.protein_ids) {
      if (graph_rng.next_double() < spec.edge_prob) data.edges.emplace_back(d, p);
    }
  }
  BipartiteGraph graph = BipartiteGraph::build(data.edges);

  SplitMix64 mol_rng(derive_seed(spec.seed, "synth-molecules"));
  const bool bimodal = spec.planted_rule != PlantedRule::SharedProtein;
  for (const std::string& d : data.drug_ids) {
    int atoms;
    if (bimodal) {
      // A size gap around the boundary keeps the molecular rule's classes
      // well separated: small 5..(b-10), large (b+10)..60.
      const bool large = mol_rng.next_below(2) == 1;
      const int lo = large ? spec.molsize_boundary + 10 : 5;
      const int hi = large ? 60 : spec.molsize_boundary - 10;
      atoms = lo + static_cast<int>(mol_rng.next_below(hi - lo + 1));
    } else {
      atoms = 5 + static_cast<int>(mol_rng.next_below(56));  // 5..60
    }
    auto [mol, smiles] = random_molecule(atoms, mol_rng);
    parse_smiles(smiles);  // generator contract: emitted strings stay parseable
    data.molecules[d] = std::move(mol);
    data.smiles[d] = std::move(smiles);
  }

  SplitMix64 feat_rng(derive_seed(spec.seed, "synth-proteins"));
  for (const std::string& p : data.protein_ids) {
    std::vector<double> row(spec.protein_dim);
    // Two decimals keep the CSV byte-stable and the values exactly parseable.
    for (double& v : row) {
      v = static_cast<double>(static_cast<int>(feat_rng.next_below(401))) / 100.0 -
          2.0;
    }
    data.protein_features[p] = std::move(row);
  }

  SplitMix64 rec_rng(derive_seed(spec.seed, "synth-records"));
  for (int i = 0; i < spec.n_records; ++i) {
    const auto a = rec_rng.next_below(spec.n_drugs);
    auto b = rec_rng.next_below(spec.n_drugs);
    while (b == a) b = rec_rng.next_below(spec.n_drugs);
    const auto c = rec_rng.next_below(spec.n_cells);
    const std::string& drug_a = data.drug_ids[a];
    const std::string& drug_b = data.drug_ids[b];
    const std::string& cell = data.cells[c].id;

    bool label = false;
    const bool shared = shared_protein_rule(graph, drug_a, drug_b, cell,
                                            spec.overlap_threshold);
    const bool molecular =
        molecular_rule(data.molecules[drug_a].atom_count(),
                       data.molecules[drug_b].atom_count(),
                       spec.molsize_boundary);
    switch (spec.planted_rule) {
      case PlantedRule::SharedProtein: label = shared; break;
      case PlantedRule::Molecular: label = molecular; break;
      case PlantedRule::Mixed: label = shared && molecular; break;
    }
    if (rec_rng.next_double() < spec.noise_rate) label = !label;
    data.records.push_back(SynergyRecord{drug_a, drug_b, cell, label ? 1 : 0});
  }
  return data;
}

inline void write_synth_files(const SynthData& data, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  auto open = [&](const std::string& name) {
    std::ofstream out(out_dir + "/" + name, std::ios::binary);
    if (!out) throw DataError("cannot write '" + out_dir + "/" + name + "'");
    return out;
  };
  {
    auto out = open("graph.tsv");
    for (const auto& [d, p] : data.edges) out << d << '\t' << p << '\n';
  }
  {
    auto out = open("molecules.smi");
    for (const std::string& d : data.drug_ids) {
      out << d << '\t' << data.smiles.at(d) << '\n';
    }
  }
  {
    auto out = open("proteins.csv");
    out << "protein_id";
    for (int i = 0; i < data.spec.protein_dim; ++i) out << ",f" << (i + 1);
    out << '\n';
    for (const std::string& p : data.protein_ids) {
      out << p;
      char buf[32];
      for (double v : data.protein_features.at(p)) {
        std::snprintf(buf, sizeof(buf), "%.2f", v);
        out << ',' << buf;
      }
      out << '\n';
    }
  }
  {
    auto out = open("cells.tsv");
    for (const CellInfo& c : data.cells) {
      out << c.id;
      if (!c.tissue.empty()) out << '\t' << c.tissue;
      out << '\n';
    }
  }
  {
    auto out = open("synergy.csv");
    out << "drug_a,drug_b,cell,label\n";
    for (const SynergyRecord& r : data.records) {
      out << r.drug_a << ',' << r.drug_b << ',' << r.cell << ',' << r.label
          << '\n';
    }
  }
}

/// Generates and writes a full dataset; returns the loaded bundle so callers
/// can verify the files pass validation.
inline DatasetBundle synth_dataset(const SynthSpec& spec,
                                   const std::string& out_dir) {
  const SynthData data = synth_generate(spec);
  write_synth_files(data, out_dir);
  BundlePaths paths;
  paths.graph = out_dir + "/graph.tsv";
  paths.molecules = {out_dir + "/molecules.smi"};
  paths.proteins = out_dir + "/proteins.csv";
  paths.cells = out_dir + "/cells.tsv";
  paths.synergy = out_dir + "/synergy.csv";
  return load_bundle(paths);
}

}  // namespace moomin
