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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "moomin/encoders.hpp"
#include "moomin/error.hpp"
#include "moomin/graph.hpp"
#include "moomin/molgraph.hpp"
#include "moomin/synergy_model.hpp"

namespace moomin {

struct CellInfo {
  std::string id;
  std::string tissue;  // optional tag, empty when absent
};

struct BundlePaths {
  std::string graph;
  std::vector<std::string> molecules;  // .smi files, fallback files or dirs
  std::string proteins;
  std::string cells;
  std::string synergy;
};

/// Everything one experiment needs, loaded and cross-validated.
struct DatasetBundle {
  BipartiteGraph graph;
  std::map<std::string, MolecularGraph> molecules;
  std::map<std::string, std::vector<double>> protein_features;
  std::vector<CellInfo> cells;
  std::vector<SynergyRecord> synergy;
  FeatureStore features;

  std::size_t protein_dim() const { return features.protein_dim(); }

  std::vector<std::string> cell_ids() const {
    std::vector<std::string> ids;
    ids.reserve(cells.size());
    for (const CellInfo& c : cells) ids.push_back(c.id);
    return ids;
  }

  std::string tissue_of(const std::string& cell_id) const {
    for (const CellInfo& c : cells) {
      if (c.id == cell_id) return c.tissue;
    }
    return "";
  }
};

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline std::string strip_comment(std::string line) {
  const auto hash = line.find('#');
  if (hash != std::string::npos) line.resize(hash);
  while (!line.empty() && (line.back() == '\r' || line.back() == ' ' ||
                           line.back() == '\t')) {
    line.pop_back();
  }
  return line;
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& text, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end == text.c_str() || *end != '\0') {
    throw ParseError(where + ": '" + text + "' is not a number");
  }
  return v;
}

/// 17 significant digits: round-trips every finite double exactly.
inline std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

/// graph.tsv: `<drug_id>\t<protein_id>` per line, `#` comments.
inline std::vector<std::pair<std::string, std::string>> load_edge_list(
    const std::string& path) {
  std::istringstream in(detail::read_file(path));
  std::vector<std::pair<std::string, std::string>> edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::strip_comment(line);
    if (line.empty()) continue;
    auto fields = detail::split(line, '\t');
    if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
      throw ParseError(path + ": line " + std::to_string(lineno) +
                       ": expected '<drug_id>\\t<protein_id>'");
    }
    edges.emplace_back(fields[0], fields[1]);
  }
  return edges;
}

/// molecules.smi: `<drug_id>\t<smiles>` per line. Comment lines start with
/// `#`; inline `#` is a SMILES triple bond, never a comment.
inline std::map<std::string, MolecularGraph> load_smiles_file(
    const std::string& path) {
  std::istringstream in(detail::read_file(path));
  std::map<std::string, MolecularGraph> mols;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' ||
                             line.back() == '\t')) {
      line.pop_back();
    }
    if (line.empty() || line[0] == '#') continue;
    auto fields = detail::split(line, '\t');
    if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
      throw ParseError(path + ": line " + std::to_string(lineno) +
                       ": expected '<drug_id>\\t<smiles>'");
    }
    try {
      mols[fields[0]] = parse_smiles(fields[1]);
    } catch (const ParseError& e) {
      throw ParseError(path + ": line " + std::to_string(lineno) + ": " +
                       e.what());
    }
  }
  return mols;
}

/// Concatenated fallback molecule file: `mol <drug_id>` section headers, each
/// followed by atom/bond lines in the parse_molfile format.
inline std::map<std::string, MolecularGraph> load_molfile_sections(
    const std::string& path) {
  std::istringstream in(detail::read_file(path));
  std::map<std::string, MolecularGraph> mols;
  std::string line;
  std::string current_id;
  std::ostringstream current_text;
  auto flush = [&]() {
    if (current_id.empty()) return;
    try {
      mols[current_id] = parse_molfile(current_text.str());
    } catch (const ParseError& e) {
      throw ParseError(path + ": molecule '" + current_id + "': " + e.what());
    }
    current_text.str("");
  };
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = detail::strip_comment(line);
    if (stripped.rfind("mol ", 0) == 0) {
      flush();
      current_id = stripped.substr(4);
      if (current_id.empty()) {
        throw ParseError(path + ": line " + std::to_string(lineno) +
                         ": 'mol' without an id");
      }
      continue;
    }
    if (current_id.empty()) {
      if (!stripped.empty()) {
        throw ParseError(path + ": line " + std::to_string(lineno) +
                         ": content before the first 'mol' header");
      }
      continue;
    }
    current_text << line << '\n';
  }
  flush();
  return mols;
}

/// Accepts a .smi file, a concatenated fallback file, a single-molecule
/// `<drug_id>.mol.txt` file, or a directory of such files.
inline std::map<std::string, MolecularGraph> load_molecules(
    const std::string& path) {
  namespace fs = std::filesystem;
  if (fs::is_directory(path)) {
    std::map<std::string, MolecularGraph> mols;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.path().string().ends_with(".mol.txt")) {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      std::string id = file.filename().string();
      id.resize(id.size() - std::string(".mol.txt").size());
      try {
        mols[id] = parse_molfile(detail::read_file(file.string()));
      } catch (const ParseError& e) {
        throw ParseError(file.string() + ": " + e.what());
      }
    }
    return mols;
  }
  if (path.ends_with(".smi")) return load_smiles_file(path);
  if (path.ends_with(".mol.txt")) {
    fs::path p(path);
    std::string id = p.filename().string();
    id.resize(id.size() - std::string(".mol.txt").size());
    std::map<std::string, MolecularGraph> mols;
    mols[id] = parse_molfile(detail::read_file(path));
    return mols;
  }
  return load_molfile_sections(path);
}

/// proteins.csv: header `protein_id,f1,...,fk`, float cells.
inline std::map<std::string, std::vector<double>> load_protein_features(
    const std::string& path) {
  std::istringstream in(detail::read_file(path));
  std::map<std::string, std::vector<double>> feats;
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::strip_comment(line);
    if (line.empty()) continue;
    auto fields = detail::split(line, ',');
    if (lineno == 1 || width == 0) {
      if (fields.size() < 2 || fields[0] != "protein_id") {
        throw ParseError(path + ": line " + std::to_string(lineno) +
                         ": expected header 'protein_id,f1,...,fk'");
      }
      width = fields.size() - 1;
      continue;
    }
    if (fields.size() - 1 != width) {
      throw ParseError(path + ": line " + std::to_string(lineno) +
                       ": row has " + std::to_string(fields.size() - 1) +
                       " features but the header declares " +
                       std::to_string(width));
    }
    std::vector<double> row;
    row.reserve(width);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      row.push_back(detail::parse_double(
          fields[i], path + ": line " + std::to_string(lineno)));
    }
    if (!feats.emplace(fields[0], std::move(row)).second) {
      throw ParseError(path + ": line " + std::to_string(lineno) +
                       ": duplicate protein '" + fields[0] + "'");
    }
  }
  return feats;
}

/// cells.tsv: `<cell_id>\t<tissue_tag>`, tag optional.
inline std::vector<CellInfo> load_cells(const std::string& path) {
  std::istringstream in(detail::read_file(path));
  std::vector<CellInfo> cells;
  std::map<std::string, bool> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::strip_comment(line);
    if (line.empty()) continue;
    auto fields = detail::split(line, '\t');
    if (fields.empty() || fields[0].empty() || fields.size() > 2) {
      throw ParseError(path + ": line " + std::to_string(lineno) +
                       ": expected '<cell_id>[\\t<tissue_tag>]'");
    }
    if (seen.count(fields[0])) {
      throw ParseError(path + ": line " + std::to_string(lineno) +
                       ": duplicate cell '" + fields[0] + "'");
    }
    seen[fields[0]] = true;
    cells.push_back(CellInfo{fields[0], fields.size() == 2 ? fields[1] : ""});
  }
  return cells;
}

/// synergy.csv: header `drug_a,drug_b,cell,label`, label in {0,1}.
inline std::vector<SynergyRecord> load_synergy(const std::string& path) {
  std::istringstream in(detail::read_file(path));
  std::vector<SynergyRecord> records;
  std::string line;
  std::size_t lineno = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::strip_comment(line);
    if (line.empty()) continue;
    auto fields = detail::split(line, ',');
    if (!saw_header) {
      if (fields.size() != 4 || fields[0] != "drug_a" || fields[1] != "drug_b" ||
          fields[2] != "cell" || fields[3] != "label") {
        throw ParseError(path + ": line " + std::to_string(lineno) +
                         ": expected header 'drug_a,drug_b,cell,label'");
      }
      saw_header = true;
      continue;
    }
    if (fields.size() != 4) {
      throw ParseError(path + ": line " + std::to_string(lineno) +
                       ": expected 4 fields");
    }
    if (fields[3] != "0" && fields[3] != "1") {
      throw ParseError(path + ": line " + std::to_string(lineno) +
                       ": label must be 0 or 1, got '" + fields[3] + "'");
    }
    records.push_back(
        SynergyRecord{fields[0], fields[1], fields[2], fields[3] == "1" ? 1 : 0});
  }
  if (!saw_header) throw ParseError(path + ": missing header");
  return records;
}

/// Loads and cross-validates every input file. Cross-reference failures are
/// collected and reported together in a single error.
inline DatasetBundle load_bundle(const BundlePaths& paths) {
  DatasetBundle bundle;
  const auto edges = load_edge_list(paths.graph);
  bundle.graph = BipartiteGraph::build(edges);
  for (const std::string& mpath : paths.molecules) {
    auto mols = load_molecules(mpath);
    for (auto& [id, mol] : mols) bundle.molecules[id] = std::move(mol);
  }
  bundle.protein_features = load_protein_features(paths.proteins);
  bundle.cells = load_cells(paths.cells);
  bundle.synergy = load_synergy(paths.synergy);

  // Vertices may be isolated: drugs known only from molecules or synergy and
  // proteins known only from the feature file still join the graph.
  std::vector<std::string> problems;
  for (const auto& [id, mol] : bundle.molecules) {
    try {
      bundle.graph.add_drug(id);
    } catch (const DataError& e) {
      problems.push_back(e.what());
    }
  }
  for (const auto& [id, row] : bundle.protein_features) {
    try {
      bundle.graph.add_protein(id);
    } catch (const DataError& e) {
      problems.push_back(e.what());
    }
  }

  std::map<std::string, bool> cell_known;
  for (const CellInfo& c : bundle.cells) cell_known[c.id] = true;
  for (std::size_t i = 0; i < bundle.synergy.size(); ++i) {
    const SynergyRecord& rec = bundle.synergy[i];
    const std::string where = "synergy record " + std::to_string(i + 1);
    if (rec.drug_a == rec.drug_b) {
      problems.push_back(where + ": drug_a equals drug_b ('" + rec.drug_a + "')");
    }
    if (!bundle.molecules.count(rec.drug_a)) {
      problems.push_back(where + ": no molecule for drug '" + rec.drug_a + "'");
    }
    if (!bundle.molecules.count(rec.drug_b)) {
      problems.push_back(where + ": no molecule for drug '" + rec.drug_b + "'");
    }
    if (!cell_known.count(rec.cell)) {
      problems.push_back(where + ": unknown cell '" + rec.cell + "'");
    }
  }
  for (std::uint32_t p = 0; p < bundle.graph.protein_count(); ++p) {
    if (bundle.graph.degree(VertexRef{VertexSide::Protein, p}) > 0 &&
        !bundle.protein_features.count(bundle.graph.protein_id(p))) {
      problems.push_back("no features for interacting protein '" +
                         bundle.graph.protein_id(p) + "'");
    }
  }
  if (!problems.empty()) {
    std::ostringstream os;
    os << "bundle validation failed (" << problems.size() << " problems):";
    for (const std::string& p : problems) os << "\n  " << p;
    throw DataError(os.str());
  }

  bundle.features = FeatureStore::build(bundle.graph, bundle.molecules,
                                        bundle.protein_features);
  return bundle;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline constexpr const char* kCheckpointHeader = "MOOMIN-CKPT v1";

/// Text checkpoint: bit-exact round trip through 17-significant-digit
/// decimals; save -> load -> save is byte-identical.
inline void save_checkpoint(const Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << kCheckpointHeader << "\n";
  out << "config r " << model.config.r << "\n";
  out << "config protein_dim " << model.config.protein_dim << "\n";
  out << "config appnp_iterations " << model.config.appnp_iterations << "\n";
  out << "config appnp_alpha " << detail::format_g17(model.config.appnp_alpha)
      << "\n";
  out << "config dropout " << detail::format_g17(model.config.dropout) << "\n";
  out << "cells " << model.cells.ids.size() << "\n";
  for (const std::string& id : model.cells.ids) out << "cell " << id << "\n";
  for (const ParamRef& p : model.parameters()) {
    out << "param " << p.name << " " << p.tensor.rows() << " "
        << p.tensor.cols() << "\n";
    for (std::size_t r = 0; r < p.tensor.rows(); ++r) {
      for (std::size_t c = 0; c < p.tensor.cols(); ++c) {
        if (c) out << " ";
        out << detail::format_g17(p.tensor.at(r, c));
      }
      out << "\n";
    }
  }
  out << "end\n";
  if (!out) throw DataError("failed while writing '" + path + "'");
}

inline Model load_checkpoint(const std::string& path,
                             std::optional<int> expect_r = std::nullopt) {
  std::istringstream in(detail::read_file(path));
  std::string line;
  auto next_line = [&](const std::string& section) -> std::string {
    if (!std::getline(in, line)) {
      throw CheckpointError(path + ": truncated in section '" + section + "'");
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };

  if (next_line("header") != kCheckpointHeader) {
    throw CheckpointError(path + ": version mismatch: expected '" +
                          std::string(kCheckpointHeader) + "', got '" + line +
                          "'");
  }

  ModelConfig config;
  auto read_config = [&](const std::string& key) -> std::string {
    std::istringstream ls(next_line("config"));
    std::string word, name, value;
    if (!(ls >> word >> name >> value) || word != "config" || name != key) {
      throw CheckpointError(path + ": expected 'config " + key + " ...', got '" +
                            line + "'");
    }
    return value;
  };
  config.r = std::stoi(read_config("r"));
  config.protein_dim = std::stoul(read_config("protein_dim"));
  config.appnp_iterations = std::stoi(read_config("appnp_iterations"));
  config.appnp_alpha = detail::parse_double(read_config("appnp_alpha"), path);
  config.dropout = detail::parse_double(read_config("dropout"), path);
  if (expect_r && *expect_r != config.r) {
    throw CheckpointError(path + ": checkpoint has r=" +
                          std::to_string(config.r) + " but r=" +
                          std::to_string(*expect_r) + " was requested");
  }

  std::size_t cell_count = 0;
  {
    std::istringstream ls(next_line("cells"));
    std::string word;
    if (!(ls >> word >> cell_count) || word != "cells") {
      throw CheckpointError(path + ": expected 'cells <count>', got '" + line +
                            "'");
    }
  }
  for (std::size_t i = 0; i < cell_count; ++i) {
    std::istringstream ls(next_line("cells"));
    std::string word, id;
    if (!(ls >> word >> id) || word != "cell") {
      throw CheckpointError(path + ": expected 'cell <id>', got '" + line + "'");
    }
    config.cell_ids.push_back(id);
  }

  Model model = Model::init(config, /*seed=*/0);
  for (const ParamRef& p : model.parameters()) {
    std::istringstream ls(next_line(p.name));
    std::string word, name;
    std::size_t rows = 0, cols = 0;
    if (!(ls >> word >> name >> rows >> cols) || word != "param" ||
        name != p.name) {
      throw CheckpointError(path + ": expected section 'param " + p.name +
                            "', got '" + line + "'");
    }
    if (rows != p.tensor.rows() || cols != p.tensor.cols()) {
      throw CheckpointError(
          path + ": section '" + p.name + "' has shape " +
          std::to_string(rows) + "x" + std::to_string(cols) + ", expected " +
          std::to_string(p.tensor.rows()) + "x" +
          std::to_string(p.tensor.cols()));
    }
    Tensor target = p.tensor;
    auto values = target.values_mut();
    for (std::size_t r = 0; r < rows; ++r) {
      std::istringstream vs(next_line(p.name));
      for (std::size_t c = 0; c < cols; ++c) {
        std::string cell;
        if (!(vs >> cell)) {
          throw CheckpointError(path + ": section '" + p.name + "' row " +
                                std::to_string(r) + " is short");
        }
        values[r * cols + c] =
            detail::parse_double(cell, path + ": section " + p.name);
      }
    }
  }
  if (next_line("end") != "end") {
    throw CheckpointError(path + ": expected trailing 'end', got '" + line +
                          "'");
  }
  return model;
}

}  // namespace moomin
