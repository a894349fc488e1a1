// Copyright (c) 2026 The foley-synth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "foley/tensor.hpp"

namespace foley {

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  void zero_grad() { grad.fill(0.0); }
};

/// Define-by-run reverse-mode autodiff over Tensor.
///
/// Every op evaluates eagerly and, when any input requires gradients,
/// registers a backward closure. backward(root) sweeps the tape in reverse
/// and accumulates into bound Param::grad buffers. Graphs are single-use:
/// build, backward, discard.
class Graph {
 public:
  using Id = int;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaves.
  Id constant(Tensor t);
  Id leaf(Param& p);

  // Elementwise.
  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id mul(Id a, Id b);
  Id scale(Id a, double s);
  Id add_scalar(Id a, double s);
  Id exp(Id a);
  Id silu(Id a);
  Id relu(Id a);
  Id tanh(Id a);

  // Shape.
  Id reshape(Id a, std::vector<int> shape);
  Id transpose2d(Id a);
  /// Replicates a scalar node to a full tensor; backward sums.
  Id broadcast_scalar(Id a, std::vector<int> shape);
  Id slice_channels(Id x, int c0, int c1);
  Id concat_channels(Id a, Id b);

  // Neural-net building blocks.
  Id linear(Id x, Id w, Id b);
  Id embedding(Id table, std::vector<int> idx);
  Id conv2d(Id x, Id w, Id b, int stride_h, int stride_w, int pad_h, int pad_w);
  Id upsample2x(Id x);
  Id mean_max_pool(Id x);
  Id l2norm_rows(Id x);
  Id film(Id x, Id scale_shift);
  Id matmul_nt(Id a, Id b);
  /// Per-row substitution: row i of the output is `fallback` when mask[i]
  /// is nonzero, otherwise row i of `rows`. Used for condition dropout.
  Id row_mix(Id rows, Id fallback, std::vector<uint8_t> mask);
  /// Multiplies every element of row i by coeffs[i] (leading-dim rows).
  Id scale_rows(Id x, std::vector<double> coeffs);

  // Reductions and losses.
  Id mean_all(Id a);
  Id mse(Id a, Id b);
  Id mse_rows(Id a, Id b);
  Id weighted_mean(Id x, std::vector<double> w);
  /// Mean cross-entropy of softmax rows against diagonal targets.
  Id ce_diag(Id logits);

  const Tensor& val(Id id) const { return nodes_[static_cast<size_t>(id)].val; }
  bool requires_grad(Id id) const { return nodes_[static_cast<size_t>(id)].rg; }
  /// Gradient buffer of a node after backward() (zeros if untouched).
  const Tensor& grad_of(Id id);

  void backward(Id root);
  size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor val;
    Tensor grad;
    bool rg = false;
    bool grad_live = false;
    std::function<void(Graph&)> back;
    Param* bound = nullptr;
  };

  Id push(Tensor val, bool rg);
  Tensor& gbuf(Id id);
  void addg(Id id, const Tensor& g);

  std::deque<Node> nodes_;
  std::vector<Id> param_leaves_;
};

}  // namespace foley
