// Copyright (c) 2026 The foley-synth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "foley/graph.hpp"
#include "foley/rng.hpp"
#include "foley/tensor.hpp"

namespace foley {

/// Ordered collection of named parameters. Insertion order defines the
/// checkpoint manifest order. Values are kept on the float32 grid (updates
/// snap after every optimizer step) so checkpoint round-trips are bit-exact.
class ParamStore {
 public:
  Param& add(const std::string& name, std::vector<int> dims);
  Param* find(const std::string& name);
  const Param* find(const std::string& name) const;
  Param& at(const std::string& name);

  std::vector<Param*>& params() { return order_; }
  const std::vector<Param*>& params() const { return order_; }

  void zero_grad();
  void set_trainable(bool on);
  bool any_trainable() const;

  long long num_values() const;
  /// FNV-1a over the float32 serialization of all parameter values, in
  /// manifest order. Used for frozen-ness checks and provenance metadata.
  uint64_t value_hash() const;
  /// Rounds every value to the nearest float32.
  void snap_f32();

 private:
  std::vector<std::unique_ptr<Param>> owned_;
  std::vector<Param*> order_;
  std::map<std::string, Param*> by_name_;
};

// Weight initializers.
void init_kaiming(Param& p, int fan_in, Rng& rng);
void init_zero(Param& p);
void init_normal(Param& p, double stddev, Rng& rng);

/// Layer handles: thin wrappers binding parameters in a store to graph ops.
struct Conv2dLayer {
  Param* w = nullptr;
  Param* b = nullptr;
  int stride_h = 1, stride_w = 1, pad_h = 1, pad_w = 1;

  static Conv2dLayer make(ParamStore& s, const std::string& name, int out_ch,
                          int in_ch, int kh, int kw, int stride_h, int stride_w,
                          int pad_h, int pad_w, Rng& rng);
  Graph::Id operator()(Graph& g, Graph::Id x) const;
};

struct LinearLayer {
  Param* w = nullptr;
  Param* b = nullptr;

  static LinearLayer make(ParamStore& s, const std::string& name, int out_dim,
                          int in_dim, Rng& rng);
  /// Identity-initialized square map (used by the text tuning layer).
  static LinearLayer make_identity(ParamStore& s, const std::string& name, int dim);
  Graph::Id operator()(Graph& g, Graph::Id x) const;
};

/// Adam with bias correction; state is kept per parameter by name.
class AdamOptimizer {
 public:
  AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamStore& store);
  void reset();
  double lr() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
  std::map<std::string, std::pair<Tensor, Tensor>> state_;
};

/// Sinusoidal features of a diffusion step index, for time conditioning.
Tensor timestep_features(const std::vector<int>& steps, int dim, int max_steps);

struct TrainEpochLog {
  int epoch = 0;
  double loss = 0.0;
  double aux = 0.0;
};

}  // namespace foley
