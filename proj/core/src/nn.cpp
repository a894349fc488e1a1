// Copyright (c) 2026 The foley-synth Authors
// SPDX-License-Identifier: Apache-2.0

#include "foley/nn.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace foley {

Param& ParamStore::add(const std::string& name, std::vector<int> dims) {
  if (by_name_.count(name)) throw std::logic_error("duplicate parameter: " + name);
  auto p = std::make_unique<Param>();
  p->name = name;
  p->value = Tensor(dims);
  p->grad = Tensor(std::move(dims));
  Param* raw = p.get();
  owned_.push_back(std::move(p));
  order_.push_back(raw);
  by_name_[name] = raw;
  return *raw;
}

Param* ParamStore::find(const std::string& name) {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

const Param* ParamStore::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

Param& ParamStore::at(const std::string& name) {
  Param* p = find(name);
  if (!p) throw std::out_of_range("no such parameter: " + name);
  return *p;
}

void ParamStore::zero_grad() {
  for (Param* p : order_) p->zero_grad();
}

void ParamStore::set_trainable(bool on) {
  for (Param* p : order_) p->trainable = on;
}

bool ParamStore::any_trainable() const {
  for (const Param* p : order_)
    if (p->trainable) return true;
  return false;
}

long long ParamStore::num_values() const {
  long long n = 0;
  for (const Param* p : order_) n += p->value.size();
  return n;
}

uint64_t ParamStore::value_hash() const {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const Param* p : order_) {
    h = fnv1a64(p->name, h);
    for (double d : p->value.v) {
      float f = static_cast<float>(d);
      unsigned char bytes[4];
      std::memcpy(bytes, &f, 4);
      h = fnv1a64(bytes, 4, h);
    }
  }
  return h;
}

void ParamStore::snap_f32() {
  for (Param* p : order_)
    for (double& d : p->value.v) d = static_cast<double>(static_cast<float>(d));
}

void init_kaiming(Param& p, int fan_in, Rng& rng) {
  double limit = std::sqrt(6.0 / fan_in);
  for (double& d : p.value.v) d = rng.uniform(-limit, limit);
  for (double& d : p.value.v) d = static_cast<double>(static_cast<float>(d));
}

void init_zero(Param& p) { p.value.fill(0.0); }

void init_normal(Param& p, double stddev, Rng& rng) {
  for (double& d : p.value.v) d = rng.normal(0.0, stddev);
  for (double& d : p.value.v) d = static_cast<double>(static_cast<float>(d));
}

Conv2dLayer Conv2dLayer::make(ParamStore& s, const std::string& name, int out_ch,
                              int in_ch, int kh, int kw, int stride_h, int stride_w,
                              int pad_h, int pad_w, Rng& rng) {
  Conv2dLayer l;
  l.w = &s.add(name + ".w", {out_ch, in_ch, kh, kw});
  l.b = &s.add(name + ".b", {out_ch});
  l.stride_h = stride_h;
  l.stride_w = stride_w;
  l.pad_h = pad_h;
  l.pad_w = pad_w;
  init_kaiming(*l.w, in_ch * kh * kw, rng);
  init_zero(*l.b);
  return l;
}

Graph::Id Conv2dLayer::operator()(Graph& g, Graph::Id x) const {
  return g.conv2d(x, g.leaf(*w), g.leaf(*b), stride_h, stride_w, pad_h, pad_w);
}

LinearLayer LinearLayer::make(ParamStore& s, const std::string& name, int out_dim,
                              int in_dim, Rng& rng) {
  LinearLayer l;
  l.w = &s.add(name + ".w", {out_dim, in_dim});
  l.b = &s.add(name + ".b", {out_dim});
  init_kaiming(*l.w, in_dim, rng);
  init_zero(*l.b);
  return l;
}

LinearLayer LinearLayer::make_identity(ParamStore& s, const std::string& name,
                                       int dim) {
  LinearLayer l;
  l.w = &s.add(name + ".w", {dim, dim});
  l.b = &s.add(name + ".b", {dim});
  for (int i = 0; i < dim; ++i) l.w->value.at2(i, i) = 1.0;
  return l;
}

Graph::Id LinearLayer::operator()(Graph& g, Graph::Id x) const {
  return g.linear(x, g.leaf(*w), g.leaf(*b));
}

void AdamOptimizer::step(ParamStore& store) {
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (Param* p : store.params()) {
    if (!p->trainable) continue;
    auto it = state_.find(p->name);
    if (it == state_.end()) {
      it = state_.emplace(p->name, std::make_pair(Tensor(p->value.dims),
                                                  Tensor(p->value.dims)))
               .first;
    }
    Tensor& m = it->second.first;
    Tensor& v = it->second.second;
    for (size_t i = 0; i < p->value.v.size(); ++i) {
      double g = p->grad.v[i];
      m.v[i] = beta1_ * m.v[i] + (1.0 - beta1_) * g;
      v.v[i] = beta2_ * v.v[i] + (1.0 - beta2_) * g * g;
      double mhat = m.v[i] / bc1;
      double vhat = v.v[i] / bc2;
      double upd = p->value.v[i] - lr_ * mhat / (std::sqrt(vhat) + eps_);
      p->value.v[i] = static_cast<double>(static_cast<float>(upd));
    }
  }
}

void AdamOptimizer::reset() {
  t_ = 0;
  state_.clear();
}

Tensor timestep_features(const std::vector<int>& steps, int dim, int max_steps) {
  if (dim % 2 != 0) throw std::invalid_argument("timestep feature dim must be even");
  int N = static_cast<int>(steps.size());
  Tensor out({N, dim});
  int half = dim / 2;
  for (int n = 0; n < N; ++n) {
    double t = static_cast<double>(steps[static_cast<size_t>(n)]);
    for (int k = 0; k < half; ++k) {
      double freq = std::pow(static_cast<double>(max_steps),
                             -static_cast<double>(k) / std::max(1, half - 1));
      out.at2(n, k) = std::sin(t * freq);
      out.at2(n, half + k) = std::cos(t * freq);
    }
  }
  return out;
}

}  // namespace foley
