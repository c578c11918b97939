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
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "moomin/dataio.hpp"
#include "moomin/encoders.hpp"
#include "moomin/error.hpp"
#include "moomin/metrics.hpp"
#include "moomin/rng.hpp"
#include "moomin/synergy_model.hpp"
#include "moomin/tensor.hpp"

namespace moomin {

enum class Mode { Exact, Sampled };

struct TrainConfig {
  int r = 1;
  Mode mode = Mode::Exact;
  int samples = 128;      // 2^7, sampled mode only
  int batch_size = 32;    // 2^5
  double lr = 5e-3;
  double weight_decay = 5e-5;
  int epochs = 0;
  double train_ratio = 0.8;
  std::uint64_t seed = 0;
  double threshold = 0.5;
  int appnp_iterations = 10;
  double appnp_alpha = 0.2;
  double dropout = 0.5;
  int threads = 1;  // held-out evaluation only; updates stay single-threaded
  // Optional: pick the epoch count by 5-fold cross-validation inside the
  // training split instead of training for the fixed `epochs`.
  bool cv_epoch_selection = false;
  int cv_folds = 5;

  void validate() const {
    if (lr <= 0.0) throw ArgumentError("train: lr must be positive");
    if (!(train_ratio > 0.0 && train_ratio < 1.0)) {
      throw ArgumentError("train: train_ratio must lie in (0, 1)");
    }
    if (samples < 1) throw ArgumentError("train: samples must be >= 1");
    if (batch_size < 1) throw ArgumentError("train: batch_size must be >= 1");
    if (epochs < 0) throw ArgumentError("train: epochs must be >= 0");
  }

  RepMode rep_mode() const {
    return mode == Mode::Exact ? RepMode::exact() : RepMode::sampled_with(samples);
  }
};

/// Adam with decoupled weight decay. Decay shrinks the parameter (p -= lr*wd*p)
/// before the bias-corrected Adam delta is applied; bias vectors and the cell
/// embedding table are registered with decay off.
class AdamOptimizer {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  AdamOptimizer(std::vector<ParamRef> params, double lr, double weight_decay)
      : params_(std::move(params)), lr_(lr), weight_decay_(weight_decay) {
    slots_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      slots_[i].m.assign(params_[i].tensor.size(), 0.0);
      slots_[i].v.assign(params_[i].tensor.size(), 0.0);
    }
  }

  int step_count() const { return step_; }

  void zero_grad() {
    for (ParamRef& p : params_) p.tensor.zero_grad();
  }

  void step() {
    ++step_;
    const double bc1 = 1.0 - std::pow(kBeta1, step_);
    const double bc2 = 1.0 - std::pow(kBeta2, step_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      ParamRef& p = params_[i];
      auto values = p.tensor.values_mut();
      if (slots_[i].m.size() != values.size()) {
        throw DimensionError("adam: state for '" + p.name +
                             "' no longer matches the parameter shape");
      }
      std::span<const double> grad = p.tensor.grad();
      if (p.decay && weight_decay_ != 0.0) {
        const double shrink = 1.0 - lr_ * weight_decay_;
        for (double& v : values) v *= shrink;
      }
      for (std::size_t j = 0; j < values.size(); ++j) {
        const double g = grad.empty() ? 0.0 : grad[j];
        slots_[i].m[j] = kBeta1 * slots_[i].m[j] + (1.0 - kBeta1) * g;
        slots_[i].v[j] = kBeta2 * slots_[i].v[j] + (1.0 - kBeta2) * g * g;
        const double m_hat = slots_[i].m[j] / bc1;
        const double v_hat = slots_[i].v[j] / bc2;
        values[j] -= lr_ * m_hat / (std::sqrt(v_hat) + kEps);
        if (!std::isfinite(values[j])) {
          throw InternalError("adam: parameter '" + p.name +
                              "' became non-finite at step " +
                              std::to_string(step_));
        }
      }
    }
  }

 private:
  struct Slot {
    std::vector<double> m, v;
  };
  std::vector<ParamRef> params_;
  std::vector<Slot> slots_;
  double lr_;
  double weight_decay_;
  int step_ = 0;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_roc_auc;
  std::optional<double> val_pr_auc;
  std::optional<double> val_f1;
};

struct TrainResult {
  Model model;
  std::vector<EpochStats> history;
  std::vector<SynergyRecord> train_set;
  std::vector<SynergyRecord> val_set;
};

/// Return false from the callback to stop after the current epoch.
using EpochCallback = std::function<bool(const EpochStats&, const Model&)>;

struct ScoreConfig {
  Mode mode = Mode::Exact;
  int samples = 128;
  std::uint64_t seed = 0;
  int threads = 1;
};

/// Inference scores for a record span, dropout off. Records are independent;
/// sampled-mode walks are seeded per record, so the output does not depend on
/// the thread count.
inline std::vector<double> score_records(const Model& model,
                                         const BipartiteGraph& graph,
                                         const FeatureStore& features,
                                         std::span<const SynergyRecord> records,
                                         const ScoreConfig& cfg) {
  std::vector<double> scores(records.size(), 0.0);
  if (records.empty()) return scores;
  const int threads = std::max(1, cfg.threads);

  auto run_range = [&](std::size_t begin, std::size_t end) {
    Tape tape;
    const Model& m = model;
    EncodingContext ctx(tape, m.drug, m.protein, graph, features);
    std::unordered_map<std::uint32_t, MultiScaleRep> exact_cache;
    SplitMix64 unused_dropout(0);
    for (std::size_t i = begin; i < end; ++i) {
      const SynergyRecord& rec = records[i];
      auto da = graph.find_drug(rec.drug_a);
      auto db = graph.find_drug(rec.drug_b);
      if (!da || !db) {
        throw DataError("score: unknown drug '" +
                        (da ? rec.drug_b : rec.drug_a) + "'");
      }
      auto rep_of = [&](std::uint32_t d, std::uint64_t stream) -> MultiScaleRep {
        if (cfg.mode == Mode::Exact) {
          auto it = exact_cache.find(d);
          if (it != exact_cache.end()) return it->second;
          MultiScaleRep rep = exact_rep(ctx, d, m.config.r);
          exact_cache.emplace(d, rep);
          return rep;
        }
        SplitMix64 walks(derive_seed(cfg.seed, "score-walks", stream));
        return sample_rep(ctx, d, m.config.r, cfg.samples, walks);
      };
      MultiScaleRep rep_a = rep_of(*da, 2 * i);
      MultiScaleRep rep_b = rep_of(*db, 2 * i + 1);
      Tensor cell = encode_cell(tape, m.cells, rec.cell);
      Tensor pair = pair_cell_rep(tape, rep_a, rep_b, cell);
      scores[i] =
          score(tape, m.head, pair, /*training=*/false, unused_dropout).scalar();
    }
  };

  if (threads == 1) {
    run_range(0, records.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (records.size() + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const std::size_t begin = static_cast<std::size_t>(t) * chunk;
      const std::size_t end = std::min(records.size(), begin + chunk);
      if (begin >= end) break;
      pool.emplace_back(run_range, begin, end);
    }
    for (std::thread& t : pool) t.join();
  }
  return scores;
}

inline MetricsReport evaluate(const Model& model, const BipartiteGraph& graph,
                              const FeatureStore& features,
                              std::span<const SynergyRecord> records,
                              const ScoreConfig& cfg, double threshold = 0.5) {
  if (records.empty()) throw ArgumentError("evaluate: no records");
  const std::vector<double> scores =
      score_records(model, graph, features, records, cfg);
  std::vector<int> labels;
  labels.reserve(records.size());
  for (const SynergyRecord& r : records) labels.push_back(r.label);
  return compute_report(labels, scores, threshold);
}

enum class GroupBy { None, Tissue, MolSize };

/// Molecule-size class of a pair: Large means 50 or more non-hydrogen atoms.
inline std::string molsize_group(std::size_t atoms_a, std::size_t atoms_b) {
  const bool large_a = atoms_a >= 50;
  const bool large_b = atoms_b >= 50;
  if (large_a && large_b) return "large-large";
  if (!large_a && !large_b) return "small-small";
  return "large-small";
}

/// Per-group reports keyed by tissue tag or molecule-size class, plus the
/// "all" group. Groups left empty by the filter are absent from the map.
inline std::map<std::string, MetricsReport> evaluate_grouped(
    const Model& model, const DatasetBundle& bundle,
    std::span<const SynergyRecord> records, const ScoreConfig& cfg,
    double threshold, GroupBy group_by) {
  if (records.empty()) throw ArgumentError("evaluate: no records");
  const std::vector<double> scores =
      score_records(model, bundle.graph, bundle.features, records, cfg);

  std::map<std::string, std::pair<std::vector<int>, std::vector<double>>> groups;
  for (std::size_t i = 0; i < records.size(); ++i) {
    groups["all"].first.push_back(records[i].label);
    groups["all"].second.push_back(scores[i]);
    if (group_by == GroupBy::None) continue;
    std::string key;
    if (group_by == GroupBy::Tissue) {
      key = bundle.tissue_of(records[i].cell);
      if (key.empty()) key = "(untagged)";
    } else {
      auto da = bundle.graph.find_drug(records[i].drug_a);
      auto db = bundle.graph.find_drug(records[i].drug_b);
      key = molsize_group(bundle.features.atom_count(*da),
                          bundle.features.atom_count(*db));
    }
    groups[key].first.push_back(records[i].label);
    groups[key].second.push_back(scores[i]);
  }

  std::map<std::string, MetricsReport> out;
  for (const auto& [key, data] : groups) {
    out[key] = compute_report(data.first, data.second, threshold);
  }
  return out;
}

namespace detail {

template <typename T>
inline void seeded_shuffle(std::vector<T>& items, SplitMix64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = rng.next_below(i);
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace detail

inline int cv_select_epochs(const TrainConfig& cfg, const ModelConfig& mc,
                            const std::vector<SynergyRecord>& train_set,
                            const BipartiteGraph& graph,
                            const FeatureStore& features);

/// Seeded shuffle, train/val split, then per-epoch shuffled mini-batches of
/// Algorithm-2 forward passes with backward and Adam updates. History carries
/// the per-epoch train loss and held-out metrics.
inline TrainResult train(const TrainConfig& cfg,
                         const std::vector<SynergyRecord>& data,
                         const BipartiteGraph& graph,
                         const FeatureStore& features,
                         const std::vector<std::string>& cell_ids,
                         EpochCallback on_epoch = nullptr) {
  cfg.validate();
  if (data.empty()) throw ArgumentError("train: empty synergy set");

  std::vector<SynergyRecord> shuffled = data;
  SplitMix64 split_rng(derive_seed(cfg.seed, "split"));
  detail::seeded_shuffle(shuffled, split_rng);
  const auto train_size = static_cast<std::size_t>(
      std::max<double>(1.0, cfg.train_ratio * static_cast<double>(shuffled.size())));
  std::vector<SynergyRecord> train_set(shuffled.begin(),
                                       shuffled.begin() + train_size);
  std::vector<SynergyRecord> val_set(shuffled.begin() + train_size,
                                     shuffled.end());

  bool has_pos = false, has_neg = false;
  for (const SynergyRecord& r : train_set) {
    (r.label == 1 ? has_pos : has_neg) = true;
  }
  if (!has_pos || !has_neg) {
    throw DataError("train: degenerate data: training split contains a single class");
  }

  ModelConfig mc;
  mc.r = cfg.r;
  mc.protein_dim = features.protein_dim();
  mc.cell_ids = cell_ids;
  mc.appnp_iterations = cfg.appnp_iterations;
  mc.appnp_alpha = cfg.appnp_alpha;
  mc.dropout = cfg.dropout;

  int epochs_to_run = cfg.epochs;
  if (cfg.cv_epoch_selection && cfg.epochs > 0) {
    epochs_to_run = cv_select_epochs(cfg, mc, train_set, graph, features);
  }

  TrainResult result;
  result.model = Model::init(mc, cfg.seed);
  result.train_set = train_set;
  result.val_set = val_set;
  if (epochs_to_run == 0) return result;

  AdamOptimizer adam(result.model.parameters(), cfg.lr, cfg.weight_decay);
  SplitMix64 dropout_rng(derive_seed(cfg.seed, "dropout"));
  SplitMix64 walk_rng(derive_seed(cfg.seed, "walks"));

  for (int epoch = 1; epoch <= epochs_to_run; ++epoch) {
    SplitMix64 shuffle_rng(derive_seed(cfg.seed, "shuffle", epoch));
    detail::seeded_shuffle(train_set, shuffle_rng);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    Tape tape;
    for (std::size_t begin = 0; begin < train_set.size();
         begin += cfg.batch_size) {
      const std::size_t end =
          std::min(train_set.size(), begin + cfg.batch_size);
      std::span<const SynergyRecord> batch(train_set.data() + begin,
                                           end - begin);
      adam.zero_grad();
      BatchResult fwd =
          batch_forward(tape, result.model, graph, features, batch,
                        cfg.rep_mode(), /*training=*/true, dropout_rng,
                        walk_rng);
      tape.backward(fwd.loss);
      adam.step();
      loss_sum += fwd.loss.scalar();
      ++batches;
      tape.clear();
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(batches);
    if (!val_set.empty()) {
      ScoreConfig sc;
      sc.mode = cfg.mode;
      sc.samples = cfg.samples;
      sc.seed = derive_seed(cfg.seed, "eval", epoch);
      sc.threads = cfg.threads;
      MetricsReport rep = evaluate(result.model, graph, features, val_set, sc,
                                   cfg.threshold);
      stats.val_roc_auc = rep.roc_auc;
      stats.val_pr_auc = rep.pr_auc;
      stats.val_f1 = rep.f1;
    }
    result.history.push_back(stats);
    if (on_epoch && !on_epoch(stats, result.model)) break;
  }
  return result;
}

/// 5-fold cross-validation inside the training split: trains once per fold
/// for cfg.epochs epochs and returns the epoch index with the best mean
/// validation ROC AUC.
inline int cv_select_epochs(const TrainConfig& cfg, const ModelConfig& mc,
                            const std::vector<SynergyRecord>& train_set,
                            const BipartiteGraph& graph,
                            const FeatureStore& features) {
  const int folds = std::max(2, cfg.cv_folds);
  std::vector<double> auc_sum(cfg.epochs, 0.0);
  std::vector<int> auc_count(cfg.epochs, 0);
  for (int fold = 0; fold < folds; ++fold) {
    std::vector<SynergyRecord> fold_train, fold_val;
    for (std::size_t i = 0; i < train_set.size(); ++i) {
      if (static_cast<int>(i % folds) == fold) {
        fold_val.push_back(train_set[i]);
      } else {
        fold_train.push_back(train_set[i]);
      }
    }
    if (fold_val.empty() || fold_train.empty()) continue;

    const std::uint64_t fold_seed = derive_seed(cfg.seed, "cv", fold);
    Model model = Model::init(mc, fold_seed);
    AdamOptimizer adam(model.parameters(), cfg.lr, cfg.weight_decay);
    SplitMix64 dropout_rng(derive_seed(fold_seed, "dropout"));
    SplitMix64 walk_rng(derive_seed(fold_seed, "walks"));
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
      SplitMix64 shuffle_rng(derive_seed(fold_seed, "shuffle", epoch));
      detail::seeded_shuffle(fold_train, shuffle_rng);
      Tape tape;
      for (std::size_t begin = 0; begin < fold_train.size();
           begin += cfg.batch_size) {
        const std::size_t end =
            std::min(fold_train.size(), begin + cfg.batch_size);
        std::span<const SynergyRecord> batch(fold_train.data() + begin,
                                             end - begin);
        adam.zero_grad();
        BatchResult fwd = batch_forward(tape, model, graph, features, batch,
                                        cfg.rep_mode(), true, dropout_rng,
                                        walk_rng);
        tape.backward(fwd.loss);
        adam.step();
        tape.clear();
      }
      ScoreConfig sc;
      sc.mode = cfg.mode;
      sc.samples = cfg.samples;
      sc.seed = derive_seed(fold_seed, "eval", epoch);
      try {
        MetricsReport rep =
            evaluate(model, graph, features, fold_val, sc, cfg.threshold);
        if (rep.roc_auc) {
          auc_sum[epoch - 1] += *rep.roc_auc;
          ++auc_count[epoch - 1];
        }
      } catch (const UndefinedMetricError&) {
        // single-class fold; skip
      }
    }
  }
  int best_epoch = cfg.epochs;
  double best = -1.0;
  for (int e = 0; e < cfg.epochs; ++e) {
    if (auc_count[e] == 0) continue;
    const double mean = auc_sum[e] / auc_count[e];
    if (mean > best) {
      best = mean;
      best_epoch = e + 1;
    }
  }
  return best_epoch;
}

}  // namespace moomin
