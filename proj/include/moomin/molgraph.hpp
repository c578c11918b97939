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

#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "moomin/error.hpp"
#include "moomin/tensor.hpp"

namespace moomin {

/// Heavy-atom elements of the supported SMILES subset, in feature-slot order.
enum class Element : std::uint8_t { B, C, N, O, P, S, F, Cl, Br, I };

inline constexpr std::size_t kElementCount = 10;
inline constexpr std::size_t kDegreeSlots = 6;   // degree clamped to 1..6
inline constexpr std::size_t kAtomFeatureDim = kElementCount + kDegreeSlots;

inline std::string_view element_symbol(Element e) {
  static constexpr std::array<std::string_view, kElementCount> names = {
      "B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"};
  return names[static_cast<std::size_t>(e)];
}

inline std::optional<Element> element_from_symbol(std::string_view s) {
  static constexpr std::array<std::string_view, kElementCount> names = {
      "B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"};
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == s) return static_cast<Element>(i);
  }
  return std::nullopt;
}

struct Bond {
  std::uint32_t a = 0;
  std::uint32_t b = 0;
  int order = 1;  // 1, 2 or 3
};

/// Heavy-atom connectivity graph of one molecule. Implicit hydrogens are
/// ignored throughout; degrees count heavy neighbors only.
struct MolecularGraph {
  std::vector<Element> atoms;
  std::vector<Bond> bonds;

  std::size_t atom_count() const { return atoms.size(); }

  std::size_t degree(std::uint32_t atom) const {
    std::size_t d = 0;
    for (const Bond& b : bonds) {
      if (b.a == atom || b.b == atom) ++d;
    }
    return d;
  }
};

/// featurize() output: a num_atoms x 16 one-hot feature matrix and the
/// symmetric-normalized adjacency with self-loops, D^-1/2 (A+I) D^-1/2.
/// Both are constants (no gradient).
struct FeaturizedMolecule {
  Tensor atom_features;
  Tensor norm_adjacency;
};

namespace detail {

inline void add_bond_checked(MolecularGraph& mol, std::uint32_t a,
                             std::uint32_t b, int order,
                             const std::string& where) {
  if (a == b) throw ParseError(where + ": bond joins atom " +
                               std::to_string(a) + " to itself");
  for (const Bond& existing : mol.bonds) {
    if ((existing.a == a && existing.b == b) ||
        (existing.a == b && existing.b == a)) {
      throw ParseError(where + ": duplicate bond between atoms " +
                       std::to_string(a) + " and " + std::to_string(b));
    }
  }
  mol.bonds.push_back(Bond{a, b, order});
}

}  // namespace detail

/// Parses the supported SMILES subset: elements B C N O P S F Cl Br I, bond
/// symbols - = # (single by default), nested branches, and ring closures by
/// single digit or %nn where each ring number opens exactly once and closes
/// exactly once. Aromatic lowercase atoms, brackets, charges and stereo
/// marks are rejected with a byte offset.
inline MolecularGraph parse_smiles(const std::string& text) {
  if (text.empty()) throw ParseError("smiles: empty string");

  auto fail = [](std::size_t offset, const std::string& reason) -> void {
    throw ParseError("smiles: offset " + std::to_string(offset) + ": " +
                     reason);
  };

  MolecularGraph mol;
  std::vector<std::uint32_t> branch_stack;
  std::optional<std::uint32_t> prev;
  std::optional<int> pending_order;
  std::optional<std::size_t> pending_offset;
  struct RingOpen {
    std::uint32_t atom;
    std::optional<int> order;
  };
  std::map<int, RingOpen> open_rings;
  std::map<int, bool> ring_used;  // ring numbers may not be reused

  auto close_or_open_ring = [&](int number, std::size_t offset) {
    if (!prev) fail(offset, "ring closure digit with no preceding atom");
    auto it = open_rings.find(number);
    if (it == open_rings.end()) {
      if (ring_used.count(number)) {
        fail(offset, "ring number " + std::to_string(number) + " reused");
      }
      open_rings[number] = RingOpen{*prev, pending_order};
      ring_used[number] = true;
    } else {
      int order = 1;
      if (it->second.order && pending_order) {
        if (*it->second.order != *pending_order) {
          fail(offset, "ring closure bond orders disagree");
        }
        order = *pending_order;
      } else if (it->second.order) {
        order = *it->second.order;
      } else if (pending_order) {
        order = *pending_order;
      }
      detail::add_bond_checked(mol, it->second.atom, *prev, order,
                               "smiles: offset " + std::to_string(offset));
      open_rings.erase(it);
    }
    pending_order.reset();
    pending_offset.reset();
  };

  auto emit_atom = [&](Element e, std::size_t offset) {
    const auto idx = static_cast<std::uint32_t>(mol.atoms.size());
    mol.atoms.push_back(e);
    if (prev) {
      detail::add_bond_checked(mol, *prev, idx, pending_order.value_or(1),
                               "smiles: offset " + std::to_string(offset));
    } else if (pending_order) {
      fail(*pending_offset, "bond symbol with no preceding atom");
    }
    prev = idx;
    pending_order.reset();
    pending_offset.reset();
  };

  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const char c = text[i];
    if (c == 'C' && i + 1 < n && text[i + 1] == 'l') {
      emit_atom(Element::Cl, i);
      i += 2;
      continue;
    }
    if (c == 'B' && i + 1 < n && text[i + 1] == 'r') {
      emit_atom(Element::Br, i);
      i += 2;
      continue;
    }
    switch (c) {
      case 'B': emit_atom(Element::B, i); break;
      case 'C': emit_atom(Element::C, i); break;
      case 'N': emit_atom(Element::N, i); break;
      case 'O': emit_atom(Element::O, i); break;
      case 'P': emit_atom(Element::P, i); break;
      case 'S': emit_atom(Element::S, i); break;
      case 'F': emit_atom(Element::F, i); break;
      case 'I': emit_atom(Element::I, i); break;
      case '-':
      case '=':
      case '#': {
        if (pending_order) fail(i, "two bond symbols in a row");
        pending_order = c == '-' ? 1 : (c == '=' ? 2 : 3);
        pending_offset = i;
        break;
      }
      case '(': {
        if (!prev) fail(i, "branch open with no preceding atom");
        if (pending_order) fail(i, "bond symbol before branch open");
        branch_stack.push_back(*prev);
        break;
      }
      case ')': {
        if (branch_stack.empty()) fail(i, "unmatched ')'");
        if (pending_order) fail(i, "dangling bond symbol before ')'");
        prev = branch_stack.back();
        branch_stack.pop_back();
        break;
      }
      case '%': {
        if (i + 2 >= n || !std::isdigit(static_cast<unsigned char>(text[i + 1])) ||
            !std::isdigit(static_cast<unsigned char>(text[i + 2]))) {
          fail(i, "'%' must be followed by two digits");
        }
        const int number = (text[i + 1] - '0') * 10 + (text[i + 2] - '0');
        close_or_open_ring(number, i);
        i += 2;
        break;
      }
      default: {
        if (std::isdigit(static_cast<unsigned char>(c))) {
          close_or_open_ring(c - '0', i);
          break;
        }
        if (c == 'b' || c == 'c' || c == 'n' || c == 'o' || c == 'p' ||
            c == 's') {
          fail(i, std::string("aromatic atom '") + c +
                      "' outside the supported subset");
        }
        if (c == '[' || c == ']') fail(i, "bracket atoms are not supported");
        if (c == '+') fail(i, "charges are not supported");
        if (c == '/' || c == '\\' || c == '@') {
          fail(i, "stereo marks are not supported");
        }
        fail(i, std::string("unknown character '") + c + "'");
      }
    }
    ++i;
  }

  if (!branch_stack.empty()) fail(n, "unmatched '('");
  if (pending_order) fail(*pending_offset, "trailing bond symbol");
  if (!open_rings.empty()) {
    fail(n, "dangling ring number " +
                std::to_string(open_rings.begin()->first));
  }
  if (mol.atoms.empty()) fail(0, "no atoms");
  return mol;
}

/// Parses the plain-text fallback format: `atom <index> <element>` lines
/// followed by `bond <i> <j> <order>` lines; `#` starts a comment. Atom
/// indices must be consecutive from 0. Errors carry the line number.
inline MolecularGraph parse_molfile(const std::string& text) {
  MolecularGraph mol;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto fail = [](std::size_t lineno, const std::string& reason) -> void {
    throw ParseError("molfile: line " + std::to_string(lineno) + ": " + reason);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string kind;
    if (!(ls >> kind)) continue;  // blank line
    if (kind == "atom") {
      long index = -1;
      std::string symbol;
      if (!(ls >> index >> symbol)) fail(lineno, "expected 'atom <index> <element>'");
      if (index != static_cast<long>(mol.atoms.size())) {
        fail(lineno, "atom index " + std::to_string(index) +
                         " out of order (expected " +
                         std::to_string(mol.atoms.size()) + ")");
      }
      auto elem = element_from_symbol(symbol);
      if (!elem) fail(lineno, "unknown element '" + symbol + "'");
      mol.atoms.push_back(*elem);
    } else if (kind == "bond") {
      long a = -1, b = -1;
      int order = 0;
      if (!(ls >> a >> b >> order)) fail(lineno, "expected 'bond <i> <j> <order>'");
      if (a < 0 || b < 0 || a >= static_cast<long>(mol.atoms.size()) ||
          b >= static_cast<long>(mol.atoms.size())) {
        fail(lineno, "bond references missing atom");
      }
      if (order < 1 || order > 3) {
        fail(lineno, "bond order must be 1, 2 or 3");
      }
      detail::add_bond_checked(mol, static_cast<std::uint32_t>(a),
                               static_cast<std::uint32_t>(b), order,
                               "molfile: line " + std::to_string(lineno));
    } else {
      fail(lineno, "unknown directive '" + kind + "'");
    }
    std::string extra;
    if (ls >> extra) fail(lineno, "trailing content '" + extra + "'");
  }
  if (mol.atoms.empty()) {
    throw ParseError("molfile: line " + std::to_string(lineno) + ": no atoms");
  }
  return mol;
}

/// One-hot element (10 slots) ++ one-hot heavy-atom degree clamped to 1..6
/// (6 slots), and the symmetric-normalized adjacency with self-loops. A
/// single-atom molecule yields adjacency [[1.0]].
inline FeaturizedMolecule featurize(const MolecularGraph& mol) {
  const std::size_t n = mol.atom_count();
  if (n == 0) throw ArgumentError("featurize: molecule has no atoms");

  std::vector<std::size_t> degree(n, 0);
  for (const Bond& b : mol.bonds) {
    ++degree[b.a];
    ++degree[b.b];
  }

  std::vector<double> feats(n * kAtomFeatureDim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    feats[i * kAtomFeatureDim + static_cast<std::size_t>(mol.atoms[i])] = 1.0;
    std::size_t d = degree[i];
    if (d < 1) d = 1;
    if (d > kDegreeSlots) d = kDegreeSlots;
    feats[i * kAtomFeatureDim + kElementCount + (d - 1)] = 1.0;
  }

  std::vector<double> adj(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) adj[i * n + i] = 1.0;
  for (const Bond& b : mol.bonds) {
    adj[b.a * n + b.b] = 1.0;
    adj[b.b * n + b.a] = 1.0;
  }
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) {
    inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(degree[i] + 1));
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      adj[i * n + j] *= inv_sqrt[i] * inv_sqrt[j];
    }
  }

  FeaturizedMolecule out;
  out.atom_features = Tensor::from_values(n, kAtomFeatureDim, std::move(feats));
  out.norm_adjacency = Tensor::from_values(n, n, std::move(adj));
  return out;
}

}  // namespace moomin
