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
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "moomin/error.hpp"
#include "moomin/rng.hpp"

namespace moomin {

enum class PoolKind { Mean, Max, Min };

namespace detail {

struct TensorNode {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  std::vector<double> grad;  // empty until backward touches the node
  bool requires_grad = false;

  std::size_t size() const { return rows * cols; }
  void ensure_grad() {
    if (grad.empty()) grad.assign(size(), 0.0);
  }
};

inline std::string shape_str(std::size_t r, std::size_t c) {
  std::ostringstream os;
  os << r << "x" << c;
  return os.str();
}

}  // namespace detail

/// Dense row-major matrix of 64-bit floats. A Tensor is a cheap handle to a
/// shared node; copies alias the same storage. Values are immutable once an
/// op has produced them; only parameter initialisation and the optimizer use
/// the mutable accessor.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::size_t rows, std::size_t cols,
                      bool requires_grad = false) {
    return from_values(rows, cols, std::vector<double>(rows * cols, 0.0),
                       requires_grad);
  }

  static Tensor from_values(std::size_t rows, std::size_t cols,
                            std::vector<double> values,
                            bool requires_grad = false) {
    if (rows == 0 || cols == 0) {
      throw ArgumentError("tensor: shape must be at least 1x1, got " +
                          detail::shape_str(rows, cols));
    }
    if (values.size() != rows * cols) {
      throw DimensionError("tensor: " + std::to_string(values.size()) +
                           " values do not fill shape " +
                           detail::shape_str(rows, cols));
    }
    Tensor t;
    t.node_ = std::make_shared<detail::TensorNode>();
    t.node_->rows = rows;
    t.node_->cols = cols;
    t.node_->values = std::move(values);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  /// 1xN constant row.
  static Tensor row(std::vector<double> values, bool requires_grad = false) {
    const std::size_t n = values.size();
    return from_values(1, n, std::move(values), requires_grad);
  }

  bool valid() const { return node_ != nullptr; }
  std::size_t rows() const { return node_->rows; }
  std::size_t cols() const { return node_->cols; }
  std::size_t size() const { return node_->size(); }
  bool requires_grad() const { return node_->requires_grad; }

  double at(std::size_t r, std::size_t c) const {
    return node_->values[r * node_->cols + c];
  }

  /// Value of a 1x1 tensor.
  double scalar() const {
    if (rows() != 1 || cols() != 1) {
      throw DimensionError("scalar: tensor is " +
                           detail::shape_str(rows(), cols()) + ", not 1x1");
    }
    return node_->values[0];
  }

  std::span<const double> values() const { return node_->values; }

  /// Mutable access for initialisation and optimizer updates only.
  std::span<double> values_mut() { return node_->values; }

  bool has_grad() const { return !node_->grad.empty(); }

  /// Gradient buffer; empty span when backward has not touched this tensor.
  std::span<const double> grad() const { return node_->grad; }

  double grad_at(std::size_t r = 0, std::size_t c = 0) const {
    if (node_->grad.empty()) return 0.0;
    return node_->grad[r * node_->cols + c];
  }

  void zero_grad() {
    if (!node_->grad.empty()) node_->grad.assign(node_->size(), 0.0);
  }

  /// Identity of the underlying node; used by caches.
  const void* id() const { return node_.get(); }

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  std::shared_ptr<detail::TensorNode> node_;
  friend class Tape;
};

/// Records forward operations and replays them in reverse to accumulate
/// gradients. One logical thread per tape; backward() visits each recorded
/// op exactly once and adds into .grad buffers without zeroing them first,
/// so repeated backward calls accumulate.
class Tape {
 public:
  Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
      throw DimensionError("matmul: inner dimensions disagree: " +
                           detail::shape_str(a.rows(), a.cols()) + " vs " +
                           detail::shape_str(b.rows(), b.cols()));
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out = Tensor::zeros(m, n);
    const double* av = a.node_->values.data();
    const double* bv = b.node_->values.data();
    double* ov = out.node_->values.data();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double aik = av[i * k + kk];
        if (aik == 0.0) continue;
        const double* brow = bv + kk * n;
        double* orow = ov + i * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
      }
    }
    record(Kind::MatMul, {a, b}, out);
    return out;
  }

  /// Elementwise a + b. When b is a 1xN row and a is MxN, b broadcasts over
  /// the rows of a (bias add); no other broadcasting.
  Tensor add(const Tensor& a, const Tensor& b) {
    if (a.rows() == b.rows() && a.cols() == b.cols()) {
      Tensor out = Tensor::zeros(a.rows(), a.cols());
      for (std::size_t i = 0; i < a.size(); ++i) {
        out.node_->values[i] = a.node_->values[i] + b.node_->values[i];
      }
      record(Kind::Add, {a, b}, out);
      return out;
    }
    if (b.rows() == 1 && b.cols() == a.cols()) {
      Tensor out = Tensor::zeros(a.rows(), a.cols());
      for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
          out.node_->values[i * a.cols() + j] =
              a.node_->values[i * a.cols() + j] + b.node_->values[j];
        }
      }
      record(Kind::AddBias, {a, b}, out);
      return out;
    }
    throw DimensionError("add: shapes disagree: " +
                         detail::shape_str(a.rows(), a.cols()) + " vs " +
                         detail::shape_str(b.rows(), b.cols()));
  }

  Tensor relu(const Tensor& x) {
    Tensor out = Tensor::zeros(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double v = x.node_->values[i];
      out.node_->values[i] = v > 0.0 ? v : 0.0;
    }
    record(Kind::Relu, {x}, out);
    return out;
  }

  Tensor sigmoid(const Tensor& x) {
    Tensor out = Tensor::zeros(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double v = x.node_->values[i];
      // Branch form avoids overflow of exp for large |v|.
      if (v >= 0.0) {
        out.node_->values[i] = 1.0 / (1.0 + std::exp(-v));
      } else {
        const double e = std::exp(v);
        out.node_->values[i] = e / (1.0 + e);
      }
    }
    record(Kind::Sigmoid, {x}, out);
    return out;
  }

  /// Concatenates 1xNi rows into a single 1x(sum Ni) row, argument order.
  Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) {
      throw ArgumentError("concat_cols: empty part list");
    }
    std::size_t total = 0;
    for (const Tensor& p : parts) {
      if (p.rows() != 1) {
        throw DimensionError("concat_cols: every part must have one row, got " +
                             detail::shape_str(p.rows(), p.cols()));
      }
      total += p.cols();
    }
    Tensor out = Tensor::zeros(1, total);
    std::size_t off = 0;
    for (const Tensor& p : parts) {
      for (std::size_t j = 0; j < p.cols(); ++j) {
        out.node_->values[off + j] = p.node_->values[j];
      }
      off += p.cols();
    }
    record(Kind::ConcatCols, parts, out);
    return out;
  }

  /// Column-wise statistic over the rows of an Mx N matrix, M >= 1. Max and
  /// min route gradient to the first attaining row (lowest row index).
  Tensor pool(const Tensor& x, PoolKind kind) {
    if (x.rows() == 0) throw ArgumentError("pool: empty input");
    const std::size_t m = x.rows(), n = x.cols();
    Tensor out = Tensor::zeros(1, n);
    if (kind == PoolKind::Mean) {
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += x.node_->values[i * n + j];
        out.node_->values[j] = s / static_cast<double>(m);
      }
      record(Kind::PoolMean, {x}, out);
      return out;
    }
    std::vector<std::uint32_t> arg(n, 0);
    for (std::size_t j = 0; j < n; ++j) {
      double best = x.node_->values[j];
      std::uint32_t bi = 0;
      for (std::size_t i = 1; i < m; ++i) {
        const double v = x.node_->values[i * n + j];
        const bool better = kind == PoolKind::Max ? v > best : v < best;
        if (better) {
          best = v;
          bi = static_cast<std::uint32_t>(i);
        }
      }
      out.node_->values[j] = best;
      arg[j] = bi;
    }
    record(kind == PoolKind::Max ? Kind::PoolMax : Kind::PoolMin, {x}, out, {},
           std::move(arg));
    return out;
  }

  /// Inverted dropout: kept entries scaled by 1/(1-p) so inference needs no
  /// correction. Identity when training is false or p == 0.
  Tensor dropout(const Tensor& x, double p, bool training, SplitMix64& rng) {
    if (!(p >= 0.0 && p < 1.0)) {
      throw ArgumentError("dropout: p must lie in [0, 1), got " +
                          std::to_string(p));
    }
    if (!training || p == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - p);
    std::vector<double> mask(x.size());
    Tensor out = Tensor::zeros(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double m = rng.next_double() < p ? 0.0 : keep_scale;
      mask[i] = m;
      out.node_->values[i] = x.node_->values[i] * m;
    }
    record(Kind::Dropout, {x}, out, std::move(mask));
    return out;
  }

  Tensor scale(const Tensor& x, double c) {
    Tensor out = Tensor::zeros(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) {
      out.node_->values[i] = x.node_->values[i] * c;
    }
    record(Kind::Scale, {x}, out, {c});
    return out;
  }

  /// sum_i coeffs[i] * parts[i] over same-shape tensors.
  Tensor linear_mix(const std::vector<Tensor>& parts,
                    const std::vector<double>& coeffs) {
    if (parts.empty()) throw ArgumentError("linear_mix: empty part list");
    if (parts.size() != coeffs.size()) {
      throw ArgumentError("linear_mix: " + std::to_string(parts.size()) +
                          " parts vs " + std::to_string(coeffs.size()) +
                          " coefficients");
    }
    const std::size_t r = parts.front().rows(), c = parts.front().cols();
    for (const Tensor& p : parts) {
      if (p.rows() != r || p.cols() != c) {
        throw DimensionError("linear_mix: shapes disagree: " +
                             detail::shape_str(r, c) + " vs " +
                             detail::shape_str(p.rows(), p.cols()));
      }
    }
    Tensor out = Tensor::zeros(r, c);
    for (std::size_t i = 0; i < parts.size(); ++i) {
      const double w = coeffs[i];
      if (w == 0.0) continue;
      for (std::size_t j = 0; j < out.size(); ++j) {
        out.node_->values[j] += w * parts[i].node_->values[j];
      }
    }
    record(Kind::LinearMix, parts, out, coeffs);
    return out;
  }

  /// Copies one row of a table; gradient flows only into that row.
  Tensor row_lookup(const Tensor& table, std::size_t row) {
    if (row >= table.rows()) {
      throw LookupError("row_lookup: row " + std::to_string(row) +
                        " out of range for " +
                        detail::shape_str(table.rows(), table.cols()));
    }
    Tensor out = Tensor::zeros(1, table.cols());
    for (std::size_t j = 0; j < table.cols(); ++j) {
      out.node_->values[j] = table.node_->values[row * table.cols() + j];
    }
    record(Kind::RowLookup, {table}, out, {},
           {static_cast<std::uint32_t>(row)});
    return out;
  }

  /// Sum of all entries as a 1x1 tensor.
  Tensor sum_all(const Tensor& x) {
    double s = 0.0;
    for (double v : x.node_->values) s += v;
    Tensor out = Tensor::from_values(1, 1, {s});
    record(Kind::SumAll, {x}, out);
    return out;
  }

  /// Binary cross-entropy of a 1x1 probability against a {0,1} label, with
  /// the probability clamped to [eps, 1-eps] to keep the boundary finite.
  Tensor bce(double label, const Tensor& prob) {
    if (label != 0.0 && label != 1.0) {
      throw ArgumentError("bce: label must be 0 or 1, got " +
                          std::to_string(label));
    }
    if (prob.rows() != 1 || prob.cols() != 1) {
      throw ArgumentError("bce: probability must be 1x1, got " +
                          detail::shape_str(prob.rows(), prob.cols()));
    }
    const double eps = kBceEps;
    const double p_raw = prob.node_->values[0];
    const double p = std::min(std::max(p_raw, eps), 1.0 - eps);
    const double loss = -(label * std::log(p) + (1.0 - label) * std::log(1.0 - p));
    Tensor out = Tensor::from_values(1, 1, {loss});
    record(Kind::Bce, {prob}, out, {label});
    return out;
  }

  /// Accumulates d(loss)/d(t) into .grad for every tensor reachable from the
  /// scalar loss. Adjoints live in a per-sweep side table and are flushed
  /// into .grad once at the end, so repeated backward calls accumulate
  /// additively instead of compounding.
  void backward(const Tensor& loss) {
    if (!loss.valid() || loss.rows() != 1 || loss.cols() != 1) {
      throw ArgumentError("backward: loss must be a 1x1 scalar");
    }
    std::unordered_map<detail::TensorNode*, std::vector<double>> adjoint;
    adjoint[loss.node_.get()] = {1.0};
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
      backward_op(*it, adjoint);
    }
    for (auto& [node, adj] : adjoint) {
      node->ensure_grad();
      for (std::size_t i = 0; i < adj.size(); ++i) node->grad[i] += adj[i];
    }
  }

  void clear() { ops_.clear(); }
  std::size_t op_count() const { return ops_.size(); }

  static constexpr double kBceEps = 1e-12;

 private:
  enum class Kind {
    MatMul,
    Add,
    AddBias,
    Relu,
    Sigmoid,
    ConcatCols,
    PoolMean,
    PoolMax,
    PoolMin,
    Dropout,
    Scale,
    LinearMix,
    RowLookup,
    SumAll,
    Bce,
  };

  struct Op {
    Kind kind{};
    std::vector<std::shared_ptr<detail::TensorNode>> inputs;
    std::shared_ptr<detail::TensorNode> out;
    std::vector<double> aux;
    std::vector<std::uint32_t> aux_idx;
  };

  void record(Kind kind, const std::vector<Tensor>& inputs, Tensor& out,
              std::vector<double> aux = {},
              std::vector<std::uint32_t> aux_idx = {}) {
    bool needs_grad = false;
    for (const Tensor& t : inputs) needs_grad = needs_grad || t.requires_grad();
    out.node_->requires_grad = needs_grad;
    if (!needs_grad) return;  // constant subgraphs never need a sweep
    Op op;
    op.kind = kind;
    op.inputs.reserve(inputs.size());
    for (const Tensor& t : inputs) op.inputs.push_back(t.node_);
    op.out = out.node_;
    op.aux = std::move(aux);
    op.aux_idx = std::move(aux_idx);
    ops_.push_back(std::move(op));
  }

  using AdjointMap =
      std::unordered_map<detail::TensorNode*, std::vector<double>>;

  static std::vector<double>* adj_of(AdjointMap& adjoint,
                                     const std::shared_ptr<detail::TensorNode>& n) {
    if (!n->requires_grad) return nullptr;
    auto [it, inserted] = adjoint.try_emplace(n.get());
    if (inserted) it->second.assign(n->size(), 0.0);
    return &it->second;
  }

  void backward_op(Op& op, AdjointMap& adjoint) {
    detail::TensorNode& out = *op.out;
    auto out_it = adjoint.find(&out);
    if (out_it == adjoint.end()) return;  // unreachable from the seeded loss
    const std::vector<double> g = std::move(out_it->second);
    adjoint.erase(out_it);
    // The op output's own gradient is final here; flush it now so every
    // reachable tensor holds d(loss)/d(tensor) after the sweep.
    out.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) out.grad[i] += g[i];
    switch (op.kind) {
      case Kind::MatMul: {
        auto& a = *op.inputs[0];
        auto& b = *op.inputs[1];
        const std::size_t m = a.rows, k = a.cols, n = b.cols;
        if (auto* ga = adj_of(adjoint, op.inputs[0])) {
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t kk = 0; kk < k; ++kk) {
              double s = 0.0;
              const double* grow = g.data() + i * n;
              const double* brow = b.values.data() + kk * n;
              for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
              (*ga)[i * k + kk] += s;
            }
          }
        }
        if (auto* gb = adj_of(adjoint, op.inputs[1])) {
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t kk = 0; kk < k; ++kk) {
              const double aik = a.values[i * k + kk];
              if (aik == 0.0) continue;
              const double* grow = g.data() + i * n;
              double* brow = gb->data() + kk * n;
              for (std::size_t j = 0; j < n; ++j) brow[j] += aik * grow[j];
            }
          }
        }
        break;
      }
      case Kind::Add: {
        for (int which = 0; which < 2; ++which) {
          if (auto* gi = adj_of(adjoint, op.inputs[which])) {
            for (std::size_t i = 0; i < gi->size(); ++i) (*gi)[i] += g[i];
          }
        }
        break;
      }
      case Kind::AddBias: {
        auto& a = *op.inputs[0];
        if (auto* ga = adj_of(adjoint, op.inputs[0])) {
          for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += g[i];
        }
        if (auto* gb = adj_of(adjoint, op.inputs[1])) {
          for (std::size_t i = 0; i < a.rows; ++i) {
            for (std::size_t j = 0; j < a.cols; ++j) {
              (*gb)[j] += g[i * a.cols + j];
            }
          }
        }
        break;
      }
      case Kind::Relu: {
        auto& x = *op.inputs[0];
        if (auto* gx = adj_of(adjoint, op.inputs[0])) {
          for (std::size_t i = 0; i < x.size(); ++i) {
            if (x.values[i] > 0.0) (*gx)[i] += g[i];  // subgradient 0 at 0
          }
        }
        break;
      }
      case Kind::Sigmoid: {
        if (auto* gx = adj_of(adjoint, op.inputs[0])) {
          for (std::size_t i = 0; i < gx->size(); ++i) {
            const double y = out.values[i];
            (*gx)[i] += g[i] * y * (1.0 - y);
          }
        }
        break;
      }
      case Kind::ConcatCols: {
        std::size_t off = 0;
        for (auto& inp : op.inputs) {
          if (auto* gi = adj_of(adjoint, inp)) {
            for (std::size_t j = 0; j < inp->cols; ++j) {
              (*gi)[j] += g[off + j];
            }
          }
          off += inp->cols;
        }
        break;
      }
      case Kind::PoolMean: {
        auto& x = *op.inputs[0];
        if (auto* gx = adj_of(adjoint, op.inputs[0])) {
          const double inv_m = 1.0 / static_cast<double>(x.rows);
          for (std::size_t i = 0; i < x.rows; ++i) {
            for (std::size_t j = 0; j < x.cols; ++j) {
              (*gx)[i * x.cols + j] += g[j] * inv_m;
            }
          }
        }
        break;
      }
      case Kind::PoolMax:
      case Kind::PoolMin: {
        auto& x = *op.inputs[0];
        if (auto* gx = adj_of(adjoint, op.inputs[0])) {
          for (std::size_t j = 0; j < x.cols; ++j) {
            (*gx)[op.aux_idx[j] * x.cols + j] += g[j];
          }
        }
        break;
      }
      case Kind::Dropout: {
        if (auto* gx = adj_of(adjoint, op.inputs[0])) {
          for (std::size_t i = 0; i < gx->size(); ++i) {
            (*gx)[i] += g[i] * op.aux[i];
          }
        }
        break;
      }
      case Kind::Scale: {
        if (auto* gx = adj_of(adjoint, op.inputs[0])) {
          for (std::size_t i = 0; i < gx->size(); ++i) {
            (*gx)[i] += g[i] * op.aux[0];
          }
        }
        break;
      }
      case Kind::LinearMix: {
        for (std::size_t p = 0; p < op.inputs.size(); ++p) {
          const double w = op.aux[p];
          if (w == 0.0) continue;
          if (auto* gi = adj_of(adjoint, op.inputs[p])) {
            for (std::size_t i = 0; i < gi->size(); ++i) (*gi)[i] += w * g[i];
          }
        }
        break;
      }
      case Kind::RowLookup: {
        auto& t = *op.inputs[0];
        if (auto* gt = adj_of(adjoint, op.inputs[0])) {
          const std::size_t row = op.aux_idx[0];
          for (std::size_t j = 0; j < t.cols; ++j) {
            (*gt)[row * t.cols + j] += g[j];
          }
        }
        break;
      }
      case Kind::SumAll: {
        if (auto* gx = adj_of(adjoint, op.inputs[0])) {
          for (std::size_t i = 0; i < gx->size(); ++i) (*gx)[i] += g[0];
        }
        break;
      }
      case Kind::Bce: {
        auto& p = *op.inputs[0];
        if (auto* gp = adj_of(adjoint, op.inputs[0])) {
          const double label = op.aux[0];
          const double eps = kBceEps;
          const double v = p.values[0];
          if (v > eps && v < 1.0 - eps) {
            (*gp)[0] += g[0] * (-(label / v) + (1.0 - label) / (1.0 - v));
          }
          // clamped region: flat, zero gradient
        }
        break;
      }
    }
  }

  std::vector<Op> ops_;
};

}  // namespace moomin
