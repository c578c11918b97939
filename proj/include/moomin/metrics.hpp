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
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "moomin/error.hpp"

namespace moomin {

/// Binary classification metrics at one threshold. roc_auc / pr_auc are
/// absent when undefined (single-class input).
struct MetricsReport {
  std::optional<double> roc_auc;
  std::optional<double> pr_auc;
  double f1 = 0.0;
  long tp = 0, fp = 0, tn = 0, fn = 0;
  long n_pos = 0, n_neg = 0;
};

namespace detail {

inline void check_lengths(std::span<const int> labels,
                          std::span<const double> scores) {
  if (labels.size() != scores.size()) {
    throw ArgumentError("metrics: " + std::to_string(labels.size()) +
                        " labels vs " + std::to_string(scores.size()) +
                        " scores");
  }
  if (labels.empty()) throw ArgumentError("metrics: empty input");
  for (int y : labels) {
    if (y != 0 && y != 1) {
      throw ArgumentError("metrics: labels must be 0 or 1");
    }
  }
}

}  // namespace detail

/// Probability that a uniformly random positive outscores a uniformly random
/// negative, ties credited 1/2. Sort-and-rank with midranks for ties.
inline double roc_auc(std::span<const int> labels,
                      std::span<const double> scores) {
  detail::check_lengths(labels, scores);
  const std::size_t n = labels.size();
  long n_pos = 0;
  for (int y : labels) n_pos += y;
  const long n_neg = static_cast<long>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw UndefinedMetricError(
        "roc_auc: undefined without both a positive and a negative example");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1) pos_rank_sum += midrank;
    }
    i = j + 1;
  }
  const double u = pos_rank_sum -
                   0.5 * static_cast<double>(n_pos) *
                       static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

/// Average precision: the mean over positives of the precision at each
/// positive's rank under descending scores, ties broken stably by input
/// index.
inline double pr_auc(std::span<const int> labels,
                     std::span<const double> scores) {
  detail::check_lengths(labels, scores);
  const std::size_t n = labels.size();
  long n_pos = 0;
  for (int y : labels) n_pos += y;
  if (n_pos == 0) {
    throw UndefinedMetricError("pr_auc: undefined without a positive example");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return scores[a] > scores[b];
                   });
  double sum = 0.0;
  long seen_pos = 0;
  for (std::size_t rank = 0; rank < n; ++rank) {
    if (labels[order[rank]] == 1) {
      ++seen_pos;
      sum += static_cast<double>(seen_pos) / static_cast<double>(rank + 1);
    }
  }
  return sum / static_cast<double>(n_pos);
}

/// F1 = 2PR/(P+R) with prediction score >= threshold; 0 when P + R is 0.
inline double f1(std::span<const int> labels, std::span<const double> scores,
                 double threshold = 0.5) {
  detail::check_lengths(labels, scores);
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (predicted && labels[i] == 1) ++tp;
    if (predicted && labels[i] == 0) ++fp;
    if (!predicted && labels[i] == 1) ++fn;
  }
  const double denom = static_cast<double>(2 * tp + fp + fn);
  if (denom == 0.0) return 0.0;
  return 2.0 * static_cast<double>(tp) / denom;
}

inline MetricsReport compute_report(std::span<const int> labels,
                                    std::span<const double> scores,
                                    double threshold = 0.5) {
  detail::check_lengths(labels, scores);
  MetricsReport rep;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i] == 1) {
      ++rep.n_pos;
      predicted ? ++rep.tp : ++rep.fn;
    } else {
      ++rep.n_neg;
      predicted ? ++rep.fp : ++rep.tn;
    }
  }
  if (rep.n_pos > 0 && rep.n_neg > 0) rep.roc_auc = roc_auc(labels, scores);
  if (rep.n_pos > 0) rep.pr_auc = pr_auc(labels, scores);
  rep.f1 = f1(labels, scores, threshold);
  return rep;
}

}  // namespace moomin
