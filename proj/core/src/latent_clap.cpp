// Copyright (c) 2026 The foley-synth Authors
// SPDX-License-Identifier: Apache-2.0

#include "foley/latent_clap.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace foley {

namespace {

Tensor latent_batch_tensor(const std::vector<const Latent*>& zs) {
  if (zs.empty()) throw std::invalid_argument("empty latent batch");
  const auto& d = zs[0]->values.dims;
  int N = static_cast<int>(zs.size());
  Tensor out({N, d[0], d[1], d[2]});
  for (int n = 0; n < N; ++n) {
    if (zs[static_cast<size_t>(n)]->values.dims != d)
      throw std::invalid_argument("latent batch has mixed shapes");
    const auto& v = zs[static_cast<size_t>(n)]->values.v;
    std::copy(v.begin(), v.end(), out.v.begin() + static_cast<size_t>(n) * v.size());
  }
  return out;
}

Tensor rows_tensor(const std::vector<const Tensor*>& rows) {
  int N = static_cast<int>(rows.size());
  int D = rows[0]->dims[0];
  Tensor out({N, D});
  for (int n = 0; n < N; ++n)
    for (int d = 0; d < D; ++d) out.at2(n, d) = (*rows[static_cast<size_t>(n)])[d];
  return out;
}

}  // namespace

LatentClapModel LatentClapModel::init(const LatentClapModelConfig& cfg, uint64_t seed) {
  LatentClapModel m;
  m.cfg_ = cfg;
  Rng rng(mix_seed(seed, "latent-clap-init"));
  int in_ch = cfg.latent_channels;
  for (size_t i = 0; i < cfg.channels.size(); ++i) {
    Conv2dLayer::make(m.store_, "block" + std::to_string(i), cfg.channels[i], in_ch, 3,
                      3, 2, 2, 1, 1, rng);
    in_ch = cfg.channels[i];
  }
  LinearLayer::make(m.store_, "head", cfg.embed_dim, 2 * in_ch, rng);
  return m;
}

Graph::Id LatentClapModel::forward(Graph& g, Graph::Id z_batch) {
  const Tensor& in = g.val(z_batch);
  if (in.rank() != 4 || in.dims[1] != cfg_.latent_channels)
    throw std::invalid_argument("latent_clap: latent channel mismatch (got " +
                                std::to_string(in.dims[1]) + ", expected " +
                                std::to_string(cfg_.latent_channels) + ")");
  Graph::Id h = z_batch;
  for (size_t i = 0; i < cfg_.channels.size(); ++i) {
    std::string name = "block" + std::to_string(i);
    h = g.conv2d(h, g.leaf(store_.at(name + ".w")), g.leaf(store_.at(name + ".b")), 2,
                 2, 1, 1);
    h = g.silu(h);
  }
  h = g.mean_max_pool(h);
  h = g.linear(h, g.leaf(store_.at("head.w")), g.leaf(store_.at("head.b")));
  return g.l2norm_rows(h);
}

Tensor LatentClapModel::encode(const Latent& z) {
  Graph g;
  Graph::Id out = forward(g, g.constant(latent_batch_tensor({&z})));
  Tensor row({cfg_.embed_dim});
  for (int d = 0; d < cfg_.embed_dim; ++d) row[d] = g.val(out).at2(0, d);
  return row;
}

double distill_loss(const Tensor& e_audio, const Tensor& e_latent) {
  if (e_audio.dims != e_latent.dims)
    throw std::invalid_argument("distill_loss: dimension mismatch");
  return mean_sq_diff(e_audio, e_latent);
}

std::vector<TrainEpochLog> train_latent_clap(LatentClapModel& model,
                                             const std::vector<Latent>& latents,
                                             const std::vector<Tensor>& audio_targets,
                                             const LatentClapTrainConfig& cfg) {
  if (latents.size() != audio_targets.size() || latents.empty())
    throw std::invalid_argument("train_latent_clap: bad corpus");
  model.store().set_trainable(true);
  AdamOptimizer opt(cfg.lr);
  std::vector<TrainEpochLog> logs;
  std::vector<size_t> order(latents.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.seed, "lclap-epoch", static_cast<uint64_t>(epoch)));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1],
                order[static_cast<size_t>(shuffle_rng.uniform_int(0, static_cast<int>(i) - 1))]);
    double total = 0.0;
    int batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch)) {
      size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch));
      std::vector<const Latent*> zb;
      std::vector<const Tensor*> tb;
      for (size_t i = start; i < end; ++i) {
        zb.push_back(&latents[order[i]]);
        tb.push_back(&audio_targets[order[i]]);
      }
      Graph g;
      Graph::Id emb = model.forward(g, g.constant(latent_batch_tensor(zb)));
      Graph::Id loss = g.mse(emb, g.constant(rows_tensor(tb)));
      model.store().zero_grad();
      total += g.val(loss).item();
      g.backward(loss);
      opt.step(model.store());
      ++batches;
    }
    logs.push_back({epoch, batches ? total / batches : 0.0, 0.0});
  }
  return logs;
}

double mean_embedding_cosine(LatentClapModel& model, const std::vector<Latent>& latents,
                             const std::vector<Tensor>& audio_targets) {
  double s = 0.0;
  for (size_t i = 0; i < latents.size(); ++i)
    s += cosine_similarity(model.encode(latents[i]), audio_targets[i]);
  return s / static_cast<double>(latents.size());
}

}  // namespace foley
