// Copyright (c) 2026 The foley-synth Authors
// SPDX-License-Identifier: Apache-2.0

#include "foley/clap.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "foley/dataset.hpp"

namespace foley {

namespace {

// Log-mel values live in roughly [log(1e-5), 12]; a fixed scale keeps the
// conv inputs O(1) without data-dependent statistics.
constexpr double kMelInputScale = 0.1;

Tensor mel_batch_tensor(const std::vector<const MelSpec*>& mels) {
  if (mels.empty()) throw std::invalid_argument("empty mel batch");
  int F = mels[0]->bins(), T = mels[0]->frames();
  int N = static_cast<int>(mels.size());
  Tensor out({N, 1, F, T});
  for (int n = 0; n < N; ++n) {
    if (mels[static_cast<size_t>(n)]->bins() != F ||
        mels[static_cast<size_t>(n)]->frames() != T)
      throw std::invalid_argument("mel batch has mixed shapes");
    const auto& v = mels[static_cast<size_t>(n)]->values.v;
    std::copy(v.begin(), v.end(),
              out.v.begin() + static_cast<size_t>(n) * v.size());
  }
  for (double& x : out.v) x *= kMelInputScale;
  return out;
}

}  // namespace

ClapModel ClapModel::init(const ClapModelConfig& cfg, uint64_t seed) {
  if (cfg.labels.size() < 2)
    throw std::invalid_argument("clap: need at least two labels");
  ClapModel m;
  m.cfg_ = cfg;
  Rng rng(mix_seed(seed, "clap-init"));

  Param& table = m.store_.add("text.table",
                              {static_cast<int>(cfg.labels.size()), cfg.label_embed_dim});
  init_normal(table, 0.5, rng);
  LinearLayer::make(m.store_, "text.proj", cfg.embed_dim, cfg.label_embed_dim, rng);

  int in_ch = 1;
  for (size_t i = 0; i < cfg.channels.size(); ++i) {
    Conv2dLayer::make(m.store_, "audio.conv" + std::to_string(i), cfg.channels[i],
                      in_ch, 3, 3, 2, 2, 1, 1, rng);
    in_ch = cfg.channels[i];
  }
  LinearLayer::make(m.store_, "audio.head", cfg.embed_dim, 2 * in_ch, rng);

  Param& temp = m.store_.add("temp.log", {1});
  temp.value.v[0] = std::log(cfg.temperature_init);

  LinearLayer::make_identity(m.store_, "tuning", cfg.embed_dim);
  m.store_.at("tuning.w").trainable = false;
  m.store_.at("tuning.b").trainable = false;
  return m;
}

Graph::Id ClapModel::text_forward(Graph& g, const std::vector<int>& label_ids,
                                  bool use_tuning) {
  Graph::Id emb = g.embedding(g.leaf(store_.at("text.table")), label_ids);
  Graph::Id proj = g.linear(emb, g.leaf(store_.at("text.proj.w")),
                            g.leaf(store_.at("text.proj.b")));
  if (use_tuning && cfg_.tuning_enabled)
    proj = g.linear(proj, g.leaf(store_.at("tuning.w")), g.leaf(store_.at("tuning.b")));
  return g.l2norm_rows(proj);
}

Graph::Id ClapModel::audio_forward(Graph& g, Graph::Id mel_batch) {
  const Tensor& in = g.val(mel_batch);
  if (in.rank() != 4 || in.dims[1] != 1 || in.dims[2] != cfg_.mel_bins)
    throw std::invalid_argument("clap audio: expected [N,1," +
                                std::to_string(cfg_.mel_bins) + ",T] input");
  Graph::Id h = mel_batch;
  for (size_t i = 0; i < cfg_.channels.size(); ++i) {
    std::string name = "audio.conv" + std::to_string(i);
    h = g.conv2d(h, g.leaf(store_.at(name + ".w")), g.leaf(store_.at(name + ".b")),
                 2, 2, 1, 1);
    h = g.silu(h);
  }
  h = g.mean_max_pool(h);
  h = g.linear(h, g.leaf(store_.at("audio.head.w")), g.leaf(store_.at("audio.head.b")));
  return g.l2norm_rows(h);
}

Tensor ClapModel::encode_text(const std::string& prompt, bool use_tuning) {
  auto label = label_from_prompt(prompt, cfg_.labels);
  if (!label)
    throw std::invalid_argument("encode_text: prompt does not match a known label: " +
                                prompt);
  Graph g;
  Graph::Id out = text_forward(g, {label_index(*label, cfg_.labels)}, use_tuning);
  Tensor row({cfg_.embed_dim});
  for (int d = 0; d < cfg_.embed_dim; ++d) row[d] = g.val(out).at2(0, d);
  return row;
}

Tensor ClapModel::encode_audio(const MelSpec& m) {
  Graph g;
  Graph::Id out = audio_forward(g, g.constant(mel_batch_tensor({&m})));
  Tensor row({cfg_.embed_dim});
  for (int d = 0; d < cfg_.embed_dim; ++d) row[d] = g.val(out).at2(0, d);
  return row;
}

double ClapModel::temperature() const {
  return std::exp(store_.find("temp.log")->value.v[0]);
}

void ClapModel::set_trainable_for_contrastive() {
  store_.set_trainable(true);
  store_.at("tuning.w").trainable = false;
  store_.at("tuning.b").trainable = false;
}

double cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.dims != b.dims)
    throw std::invalid_argument("cosine_similarity: dimension mismatch");
  double na = l2_norm(a), nb = l2_norm(b);
  if (na < 1e-12 || nb < 1e-12)
    throw std::invalid_argument("cosine_similarity: zero vector");
  return dot(a, b) / (na * nb);
}

double info_nce_from_logits(const Tensor& logits) {
  Graph g;
  Graph::Id l = g.constant(logits);
  Graph::Id row = g.ce_diag(l);
  Graph::Id col = g.ce_diag(g.transpose2d(l));
  return 0.5 * (g.val(row).item() + g.val(col).item());
}

double contrastive_loss(ClapModel& model, const std::vector<const MelSpec*>& mels,
                        const std::vector<int>& label_ids, bool accumulate_grads) {
  if (mels.size() < 2) throw std::invalid_argument("contrastive_loss: batch size >= 2");
  if (mels.size() != label_ids.size())
    throw std::invalid_argument("contrastive_loss: batch size mismatch");
  bool all_same = std::all_of(label_ids.begin(), label_ids.end(),
                              [&](int x) { return x == label_ids[0]; });
  if (all_same)
    throw std::invalid_argument("contrastive_loss: need at least two distinct labels");
  int B = static_cast<int>(mels.size());
  Graph g;
  Graph::Id audio = model.audio_forward(g, g.constant(mel_batch_tensor(mels)));
  Graph::Id text = model.text_forward(g, label_ids, /*use_tuning=*/false);
  Graph::Id sims = g.matmul_nt(audio, text);
  // logits = sims / temperature, with temperature = exp(log_temp).
  Graph::Id inv_temp = g.exp(g.scale(g.leaf(model.store().at("temp.log")), -1.0));
  Graph::Id scaled = g.mul(sims, g.broadcast_scalar(inv_temp, {B, B}));
  Graph::Id loss = g.scale(g.add(g.ce_diag(scaled), g.ce_diag(g.transpose2d(scaled))), 0.5);
  double value = g.val(loss).item();
  if (accumulate_grads) g.backward(loss);
  return value;
}

std::vector<TrainEpochLog> train_clap(ClapModel& model, const std::vector<MelSpec>& mels,
                                      const std::vector<int>& label_ids,
                                      const ClapTrainConfig& cfg) {
  if (mels.size() != label_ids.size() || mels.empty())
    throw std::invalid_argument("train_clap: bad corpus");
  int distinct = 0;
  {
    std::vector<int> sorted = label_ids;
    std::sort(sorted.begin(), sorted.end());
    distinct = static_cast<int>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
  }
  if (distinct < 2) throw std::invalid_argument("train_clap: corpus has a single class");

  model.set_trainable_for_contrastive();
  AdamOptimizer opt(cfg.lr);
  std::vector<TrainEpochLog> logs;
  std::vector<size_t> order(mels.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.seed, "clap-epoch", static_cast<uint64_t>(epoch)));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1],
                order[static_cast<size_t>(shuffle_rng.uniform_int(0, static_cast<int>(i) - 1))]);
    double total = 0.0;
    int batches = 0;
    for (size_t start = 0; start + 2 <= order.size(); start += static_cast<size_t>(cfg.batch)) {
      size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch));
      if (end - start < 2) break;
      std::vector<const MelSpec*> batch_mels;
      std::vector<int> batch_ids;
      bool two_labels = false;
      for (size_t i = start; i < end; ++i) {
        batch_mels.push_back(&mels[order[i]]);
        batch_ids.push_back(label_ids[order[i]]);
        if (batch_ids.back() != batch_ids.front()) two_labels = true;
      }
      if (!two_labels) continue;  // degenerate batch, skip
      model.store().zero_grad();
      total += contrastive_loss(model, batch_mels, batch_ids, /*accumulate_grads=*/true);
      opt.step(model.store());
      // Keep the learnable temperature in a sane range.
      double& lt = model.store().at("temp.log").value.v[0];
      lt = std::clamp(lt, std::log(0.01), std::log(1.0));
      lt = static_cast<double>(static_cast<float>(lt));
      ++batches;
    }
    logs.push_back({epoch, batches ? total / batches : 0.0, 0.0});
  }
  return logs;
}

double class_retrieval_accuracy(ClapModel& model, const std::vector<MelSpec>& mels,
                                const std::vector<int>& label_ids) {
  const auto& labels = model.config().labels;
  std::vector<Tensor> text_embs;
  for (const auto& l : labels)
    text_embs.push_back(model.encode_text(prompt_of(l, labels)));
  int correct = 0;
  for (size_t i = 0; i < mels.size(); ++i) {
    Tensor e = model.encode_audio(mels[i]);
    int best = 0;
    double best_sim = -2.0;
    for (size_t k = 0; k < text_embs.size(); ++k) {
      double s = cosine_similarity(e, text_embs[k]);
      if (s > best_sim) {
        best_sim = s;
        best = static_cast<int>(k);
      }
    }
    if (best == label_ids[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(mels.size());
}

}  // namespace foley
