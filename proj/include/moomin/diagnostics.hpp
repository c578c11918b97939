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

#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "moomin/contextualizer.hpp"
#include "moomin/dataio.hpp"
#include "moomin/error.hpp"
#include "moomin/graph.hpp"
#include "moomin/rng.hpp"
#include "moomin/synergy_model.hpp"
#include "moomin/tensor.hpp"
#include "moomin/trainer.hpp"

namespace moomin {

/// |a - b| relative to the larger magnitude, floored at 1e-4 so that the
/// noise floor of central differences on near-zero gradients does not
/// register as a large relative error.
inline double gradcheck_rel_err(double autodiff, double finite_diff) {
  const double denom =
      std::max({std::abs(autodiff), std::abs(finite_diff), 1e-4});
  return std::abs(autodiff - finite_diff) / denom;
}

struct GradCheckEntry {
  std::string param;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  int r = 0;
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::vector<GradCheckEntry> per_param;
};

namespace detail {

/// Fixed tiny dataset: 3 drugs, 4 proteins, 2 cells, both classes present.
struct TinyBundle {
  BipartiteGraph graph;
  FeatureStore features;
  std::vector<std::string> cell_ids;
  std::vector<SynergyRecord> records;
};

inline TinyBundle tiny_bundle(std::uint64_t seed) {
  TinyBundle b;
  b.graph = BipartiteGraph::build({
      {"d1", "p1"}, {"d1", "p2"}, {"d2", "p1"}, {"d2", "p3"},
      {"d3", "p3"}, {"d3", "p4"},
  });
  std::map<std::string, MolecularGraph> molecules;
  molecules["d1"] = parse_smiles("CCO");
  molecules["d2"] = parse_smiles("C1CC1N");
  molecules["d3"] = parse_smiles("N=CC(O)S");
  std::map<std::string, std::vector<double>> protein_features;
  SplitMix64 rng(derive_seed(seed, "tiny-proteins"));
  for (const char* p : {"p1", "p2", "p3", "p4"}) {
    std::vector<double> row(6);
    for (double& v : row) v = rng.next_uniform(-1.0, 1.0);
    protein_features[p] = row;
  }
  b.features = FeatureStore::build(b.graph, molecules, protein_features);
  b.cell_ids = {"c1", "c2"};
  b.records = {
      {"d1", "d2", "c1", 1},
      {"d2", "d3", "c2", 0},
      {"d1", "d3", "c1", 0},
      {"d3", "d1", "c2", 1},
  };
  return b;
}

}  // namespace detail

/// End-to-end gradient check of the exact-mode batch forward pass on a tiny
/// fixed bundle: every parameter coordinate is compared against central
/// finite differences (h = 1e-5). Dropout is off (inference-mode head), so
/// the loss is deterministic.
inline GradCheckReport gradcheck(int r, std::uint64_t seed) {
  detail::TinyBundle bundle = detail::tiny_bundle(seed);

  ModelConfig mc;
  mc.r = r;
  mc.protein_dim = bundle.features.protein_dim();
  mc.cell_ids = bundle.cell_ids;
  Model model = Model::init(mc, seed);

  auto loss_value = [&]() {
    Tape tape;
    SplitMix64 dropout_rng(1);
    SplitMix64 walk_rng(1);
    BatchResult fwd = batch_forward(tape, model, bundle.graph, bundle.features,
                                    bundle.records, RepMode::exact(),
                                    /*training=*/false, dropout_rng, walk_rng);
    return fwd.loss.scalar();
  };

  // One autodiff pass.
  {
    Tape tape;
    SplitMix64 dropout_rng(1);
    SplitMix64 walk_rng(1);
    BatchResult fwd = batch_forward(tape, model, bundle.graph, bundle.features,
                                    bundle.records, RepMode::exact(),
                                    /*training=*/false, dropout_rng, walk_rng);
    for (ParamRef& p : model.parameters()) p.tensor.zero_grad();
    tape.backward(fwd.loss);
  }

  GradCheckReport report;
  report.r = r;
  const double h = 1e-5;
  for (ParamRef& p : model.parameters()) {
    GradCheckEntry entry;
    entry.param = p.name;
    Tensor t = p.tensor;
    auto values = t.values_mut();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = loss_value();
      values[i] = saved - h;
      const double down = loss_value();
      values[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double ad = t.grad().empty() ? 0.0 : t.grad()[i];
      entry.max_rel_err = std::max(entry.max_rel_err, gradcheck_rel_err(ad, fd));
      ++report.checked;
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.per_param.push_back(entry);
  }
  return report;
}

struct WalkCheckRow {
  int samples = 0;
  double mean_rel_err = 0.0;  // mean over trials of the block-mean error
  double max_rel_err = 0.0;   // worst block over all trials
  double std_rel_err = 0.0;   // std over trials of the block-mean error
};

/// Relative infinity-norm error per block of a sampled representation
/// against the exact one.
inline std::vector<double> block_rel_errors(const MultiScaleRep& sampled,
                                            const MultiScaleRep& exact) {
  if (sampled.blocks.size() != exact.blocks.size()) {
    throw DimensionError("block_rel_errors: scale counts disagree");
  }
  std::vector<double> errs;
  for (std::size_t l = 0; l < exact.blocks.size(); ++l) {
    double diff = 0.0, norm = 0.0;
    auto sv = sampled.blocks[l].values();
    auto ev = exact.blocks[l].values();
    for (std::size_t j = 0; j < ev.size(); ++j) {
      diff = std::max(diff, std::abs(sv[j] - ev[j]));
      norm = std::max(norm, std::abs(ev[j]));
    }
    errs.push_back(diff / (norm + 1e-9));
  }
  return errs;
}

/// Convergence of the sampled representation toward the exact one on a
/// doubling sample-size ladder, `trials` independent runs per rung.
inline std::vector<WalkCheckRow> walkcheck(const Model& model,
                                           const BipartiteGraph& graph,
                                           const FeatureStore& features,
                                           const std::string& drug_id, int r,
                                           int max_samples, int trials,
                                           std::uint64_t seed) {
  auto drug = graph.find_drug(drug_id);
  if (!drug) throw LookupError("walkcheck: unknown drug '" + drug_id + "'");
  if (trials < 1) throw ArgumentError("walkcheck: trials must be >= 1");

  Tape tape;
  EncodingContext ctx(tape, model.drug, model.protein, graph, features);
  const MultiScaleRep exact = exact_rep(ctx, *drug, r);

  std::vector<WalkCheckRow> rows;
  for (int s = 2; s <= max_samples; s *= 2) {
    WalkCheckRow row;
    row.samples = s;
    std::vector<double> trial_means;
    for (int t = 0; t < trials; ++t) {
      SplitMix64 rng(derive_seed(seed, "walkcheck", static_cast<std::uint64_t>(s) << 20 | t));
      const MultiScaleRep sampled = sample_rep(ctx, *drug, r, s, rng);
      const std::vector<double> errs = block_rel_errors(sampled, exact);
      double mean = 0.0;
      for (double e : errs) {
        mean += e;
        row.max_rel_err = std::max(row.max_rel_err, e);
      }
      trial_means.push_back(mean / static_cast<double>(errs.size()));
    }
    for (double e : trial_means) row.mean_rel_err += e;
    row.mean_rel_err /= static_cast<double>(trials);
    double var = 0.0;
    for (double e : trial_means) {
      var += (e - row.mean_rel_err) * (e - row.mean_rel_err);
    }
    row.std_rel_err = std::sqrt(var / static_cast<double>(trials));
    rows.push_back(row);
  }
  return rows;
}

struct BenchRow {
  std::string mode;  // "exact" or "sampled"
  int batch = 0;
  int samples = 0;  // 0 for exact rows
  double mean_seconds = 0.0;
  double std_seconds = 0.0;
  double relative_pct = 100.0;  // sampled runtime relative to exact, percent
};

/// Wall-clock of one forward+backward step per (batch size, sample count),
/// with the exact route as the 100% baseline at each batch size.
inline std::vector<BenchRow> bench(Model& model, const DatasetBundle& bundle,
                                   const std::vector<int>& batch_ladder,
                                   const std::vector<int>& sample_ladder,
                                   int repetitions, std::uint64_t seed) {
  if (repetitions < 1) throw ArgumentError("bench: repetitions must be >= 1");
  if (bundle.synergy.empty()) throw ArgumentError("bench: bundle has no records");

  auto step_time = [&](int batch, RepMode mode, std::uint64_t rep) {
    std::vector<SynergyRecord> records;
    for (int i = 0; i < batch; ++i) {
      records.push_back(bundle.synergy[i % bundle.synergy.size()]);
    }
    SplitMix64 dropout_rng(derive_seed(seed, "bench-dropout", rep));
    SplitMix64 walk_rng(derive_seed(seed, "bench-walks", rep));
    Tape tape;
    const auto start = std::chrono::steady_clock::now();
    BatchResult fwd = batch_forward(tape, model, bundle.graph, bundle.features,
                                    records, mode, /*training=*/true,
                                    dropout_rng, walk_rng);
    tape.backward(fwd.loss);
    const auto stop = std::chrono::steady_clock::now();
    for (ParamRef& p : model.parameters()) p.tensor.zero_grad();
    return std::chrono::duration<double>(stop - start).count();
  };

  auto measure = [&](int batch, RepMode mode) {
    std::vector<double> times(repetitions);
    for (int rep = 0; rep < repetitions; ++rep) {
      times[rep] = step_time(batch, mode, rep);
    }
    double mean = 0.0;
    for (double t : times) mean += t;
    mean /= repetitions;
    double var = 0.0;
    for (double t : times) var += (t - mean) * (t - mean);
    return std::pair<double, double>(mean, std::sqrt(var / repetitions));
  };

  std::vector<BenchRow> rows;
  for (int batch : batch_ladder) {
    const auto [exact_mean, exact_std] = measure(batch, RepMode::exact());
    BenchRow base;
    base.mode = "exact";
    base.batch = batch;
    base.mean_seconds = exact_mean;
    base.std_seconds = exact_std;
    base.relative_pct = 100.0;
    rows.push_back(base);
    for (int s : sample_ladder) {
      const auto [mean, sd] = measure(batch, RepMode::sampled_with(s));
      BenchRow row;
      row.mode = "sampled";
      row.batch = batch;
      row.samples = s;
      row.mean_seconds = mean;
      row.std_seconds = sd;
      row.relative_pct = exact_mean > 0.0 ? 100.0 * mean / exact_mean : 0.0;
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace moomin
