// Copyright (c) 2026 The foley-synth Authors
// SPDX-License-Identifier: Apache-2.0

#include "foley/vae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace foley {

namespace {

int ilog2(int x) {
  int p = 0;
  while ((1 << p) < x) ++p;
  if ((1 << p) != x) throw std::invalid_argument("vae: ratio must be a power of two");
  return p;
}

Tensor mel_batch_raw(const std::vector<const MelSpec*>& mels) {
  int F = mels[0]->bins(), T = mels[0]->frames();
  int N = static_cast<int>(mels.size());
  Tensor out({N, 1, F, T});
  for (int n = 0; n < N; ++n) {
    const auto& v = mels[static_cast<size_t>(n)]->values.v;
    std::copy(v.begin(), v.end(), out.v.begin() + static_cast<size_t>(n) * v.size());
  }
  return out;
}

}  // namespace

VaeModel VaeModel::init(const VaeModelConfig& cfg, uint64_t seed) {
  if (cfg.latent_channels < 1)
    throw std::invalid_argument("vae: latent_channels must be >= 1");
  if (cfg.kl_weight < 0.0) throw std::invalid_argument("vae: kl_weight must be >= 0");
  VaeModel m;
  m.cfg_ = cfg;
  m.downsamples_ = ilog2(cfg.ratio);
  if (static_cast<int>(cfg.channels.size()) != m.downsamples_)
    throw std::invalid_argument("vae: channels size must equal log2(ratio)");
  Rng rng(mix_seed(seed, "vae-init"));

  int in_ch = 1;
  for (int i = 0; i < m.downsamples_; ++i) {
    Conv2dLayer::make(m.store_, "enc.down" + std::to_string(i),
                      cfg.channels[static_cast<size_t>(i)], in_ch, 3, 3, 2, 2, 1, 1, rng);
    in_ch = cfg.channels[static_cast<size_t>(i)];
  }
  Conv2dLayer::make(m.store_, "enc.head", 2 * cfg.latent_channels, in_ch, 3, 3, 1, 1,
                    1, 1, rng);

  int taper = std::max(cfg.channels.front() / 2, 2);
  Conv2dLayer::make(m.store_, "dec.in", cfg.channels.back(), cfg.latent_channels, 3, 3,
                    1, 1, 1, 1, rng);
  for (int i = m.downsamples_ - 1; i >= 0; --i) {
    int out_ch = i > 0 ? cfg.channels[static_cast<size_t>(i - 1)] : taper;
    Conv2dLayer::make(m.store_, "dec.up" + std::to_string(i), out_ch,
                      cfg.channels[static_cast<size_t>(i)], 3, 3, 1, 1, 1, 1, rng);
  }
  Conv2dLayer::make(m.store_, "dec.out", 1, taper, 3, 3, 1, 1, 1, 1, rng);
  return m;
}

VaeModel::EncoderOut VaeModel::encode_forward(Graph& g, Graph::Id mel_batch) {
  const Tensor& in = g.val(mel_batch);
  if (in.rank() != 4 || in.dims[1] != 1)
    throw std::invalid_argument("vae encode: [N,1,F,T] input required");
  if (in.dims[2] % cfg_.ratio != 0 || in.dims[3] % cfg_.ratio != 0)
    throw std::invalid_argument("vae encode: F and T must be divisible by ratio");
  Graph::Id h = mel_batch;
  for (int i = 0; i < downsamples_; ++i) {
    std::string name = "enc.down" + std::to_string(i);
    h = g.conv2d(h, g.leaf(store_.at(name + ".w")), g.leaf(store_.at(name + ".b")), 2,
                 2, 1, 1);
    h = g.silu(h);
  }
  h = g.conv2d(h, g.leaf(store_.at("enc.head.w")), g.leaf(store_.at("enc.head.b")), 1,
               1, 1, 1);
  EncoderOut out;
  out.mu = g.slice_channels(h, 0, cfg_.latent_channels);
  out.logvar = g.slice_channels(h, cfg_.latent_channels, 2 * cfg_.latent_channels);
  return out;
}

Graph::Id VaeModel::decode_forward(Graph& g, Graph::Id z) {
  const Tensor& in = g.val(z);
  if (in.rank() != 4 || in.dims[1] != cfg_.latent_channels)
    throw std::invalid_argument("vae decode: latent channel mismatch");
  Graph::Id h = g.conv2d(z, g.leaf(store_.at("dec.in.w")), g.leaf(store_.at("dec.in.b")),
                         1, 1, 1, 1);
  h = g.silu(h);
  for (int i = downsamples_ - 1; i >= 0; --i) {
    std::string name = "dec.up" + std::to_string(i);
    h = g.upsample2x(h);
    h = g.conv2d(h, g.leaf(store_.at(name + ".w")), g.leaf(store_.at(name + ".b")), 1,
                 1, 1, 1);
    h = g.silu(h);
  }
  return g.conv2d(h, g.leaf(store_.at("dec.out.w")), g.leaf(store_.at("dec.out.b")), 1,
                  1, 1, 1);
}

Tensor VaeModel::standardize(const MelSpec& m) const {
  Tensor out({1, 1, m.bins(), m.frames()});
  double inv = 1.0 / std::max(mel_std, 1e-6);
  for (size_t i = 0; i < m.values.v.size(); ++i)
    out.v[i] = (m.values.v[i] - mel_mean) * inv;
  return out;
}

std::vector<int> VaeModel::latent_dims(int frames) const {
  return {cfg_.latent_channels, cfg_.mel_bins / cfg_.ratio, frames / cfg_.ratio};
}

Latent VaeModel::encode(const MelSpec& m, EncodeMode mode, uint64_t seed) {
  if (m.bins() % cfg_.ratio != 0 || m.frames() % cfg_.ratio != 0)
    throw std::invalid_argument("vae encode: mel dims not divisible by ratio");
  Graph g;
  EncoderOut eo = encode_forward(g, g.constant(standardize(m)));
  const Tensor& mu = g.val(eo.mu);
  Latent out;
  out.values = Tensor({mu.dims[1], mu.dims[2], mu.dims[3]});
  if (mode == EncodeMode::kMean) {
    std::copy(mu.v.begin(), mu.v.end(), out.values.v.begin());
  } else {
    const Tensor& lv = g.val(eo.logvar);
    Rng rng(mix_seed(seed, "vae-sample"));
    for (size_t i = 0; i < out.values.v.size(); ++i)
      out.values.v[i] = mu.v[i] + std::exp(0.5 * lv.v[i]) * rng.normal();
  }
  double inv = 1.0 / std::max(latent_std, 1e-12);
  for (double& x : out.values.v) x *= inv;
  return out;
}

MelSpec VaeModel::decode(const Latent& z, const MelConfig& mel_cfg) {
  if (z.values.rank() != 3 || z.values.dims[0] != cfg_.latent_channels)
    throw std::invalid_argument("vae decode: latent shape mismatch");
  Tensor zin({1, z.values.dims[0], z.values.dims[1], z.values.dims[2]});
  for (size_t i = 0; i < z.values.v.size(); ++i) zin.v[i] = z.values.v[i] * latent_std;
  Graph g;
  Graph::Id out = decode_forward(g, g.constant(zin));
  const Tensor& o = g.val(out);
  MelSpec m;
  m.config = mel_cfg;
  m.values = Tensor({o.dims[2], o.dims[3]});
  for (size_t i = 0; i < m.values.v.size(); ++i)
    m.values.v[i] = o.v[i] * mel_std + mel_mean;
  return m;
}

Graph::Id kl_divergence_mean(Graph& g, Graph::Id mu, Graph::Id logvar) {
  Graph::Id mu2 = g.mul(mu, mu);
  Graph::Id var = g.exp(logvar);
  Graph::Id sum = g.sub(g.add(mu2, var), g.add_scalar(logvar, 1.0));
  return g.scale(g.mean_all(sum), 0.5);
}

VaeLossParts vae_loss(VaeModel& model, const Tensor& mel_batch, Rng& noise_rng,
                      bool accumulate_grads) {
  Graph g;
  Graph::Id input = g.constant(mel_batch);
  VaeModel::EncoderOut eo = model.encode_forward(g, input);
  const Tensor& mu = g.val(eo.mu);
  Tensor eta(mu.dims);
  for (double& e : eta.v) e = noise_rng.normal();
  Graph::Id z = g.add(eo.mu, g.mul(g.exp(g.scale(eo.logvar, 0.5)), g.constant(eta)));
  Graph::Id recon = model.decode_forward(g, z);
  Graph::Id recon_mse = g.mse(recon, input);
  Graph::Id kl = kl_divergence_mean(g, eo.mu, eo.logvar);
  Graph::Id total = g.add(recon_mse, g.scale(kl, model.config().kl_weight));
  VaeLossParts parts;
  parts.total = g.val(total).item();
  parts.recon = g.val(recon_mse).item();
  parts.kl = g.val(kl).item();
  if (accumulate_grads) g.backward(total);
  return parts;
}

std::vector<TrainEpochLog> train_vae(VaeModel& model, const std::vector<MelSpec>& mels,
                                     const VaeTrainConfig& cfg) {
  if (mels.empty()) throw std::invalid_argument("train_vae: empty corpus");
  // Corpus statistics for input standardization.
  double sum = 0.0, sumsq = 0.0;
  long long count = 0;
  for (const auto& m : mels) {
    for (double x : m.values.v) {
      sum += x;
      sumsq += x * x;
    }
    count += m.values.size();
  }
  model.mel_mean = sum / static_cast<double>(count);
  model.mel_std =
      std::sqrt(std::max(sumsq / static_cast<double>(count) -
                             model.mel_mean * model.mel_mean,
                         1e-12));

  model.store().set_trainable(true);
  AdamOptimizer opt(cfg.lr);
  std::vector<TrainEpochLog> logs;
  std::vector<size_t> order(mels.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.seed, "vae-epoch", static_cast<uint64_t>(epoch)));
    Rng noise_rng(mix_seed(cfg.seed, "vae-noise", static_cast<uint64_t>(epoch)));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1],
                order[static_cast<size_t>(shuffle_rng.uniform_int(0, static_cast<int>(i) - 1))]);
    double total = 0.0;
    int batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch)) {
      size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch));
      std::vector<const MelSpec*> batch;
      for (size_t i = start; i < end; ++i) batch.push_back(&mels[order[i]]);
      Tensor raw = mel_batch_raw(batch);
      double inv = 1.0 / std::max(model.mel_std, 1e-6);
      for (double& x : raw.v) x = (x - model.mel_mean) * inv;
      model.store().zero_grad();
      VaeLossParts parts = vae_loss(model, raw, noise_rng, /*accumulate_grads=*/true);
      opt.step(model.store());
      total += parts.total;
      ++batches;
    }
    logs.push_back({epoch, batches ? total / batches : 0.0, 0.0});
  }

  // Latent scale over posterior means, for unit-scale diffusion inputs.
  model.latent_std = 1.0;
  double lsum = 0.0, lsumsq = 0.0;
  long long lcount = 0;
  for (const auto& m : mels) {
    Latent z = model.encode(m, VaeModel::EncodeMode::kMean);
    for (double x : z.values.v) {
      lsum += x;
      lsumsq += x * x;
    }
    lcount += z.values.size();
  }
  double mean = lsum / static_cast<double>(lcount);
  model.latent_std = std::sqrt(
      std::max(lsumsq / static_cast<double>(lcount) - mean * mean, 1e-12));
  return logs;
}

}  // namespace foley
