// Copyright (c) 2026 The foley-synth Authors
// SPDX-License-Identifier: Apache-2.0

#include "foley/ldm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "foley/dataset.hpp"

namespace foley {

NoiseSchedule make_schedule(int N, double beta_start, double beta_end) {
  if (N < 1) throw std::invalid_argument("make_schedule: N must be >= 1");
  if (!(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0))
    throw std::invalid_argument("make_schedule: need 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.N = N;
  s.beta.assign(static_cast<size_t>(N) + 1, 0.0);
  s.alpha_bar.assign(static_cast<size_t>(N) + 1, 1.0);
  for (int n = 1; n <= N; ++n) {
    double t = N == 1 ? 0.0 : static_cast<double>(n - 1) / (N - 1);
    s.beta[static_cast<size_t>(n)] = beta_start + (beta_end - beta_start) * t;
    s.alpha_bar[static_cast<size_t>(n)] =
        s.alpha_bar[static_cast<size_t>(n) - 1] * (1.0 - s.beta[static_cast<size_t>(n)]);
  }
  return s;
}

double step_weight(int n, const LossConfig& cfg) {
  if (n < 0) throw std::invalid_argument("step_weight: negative step");
  return std::pow(cfg.weight_base, -static_cast<double>(n) / cfg.weight_scale);
}

namespace {

void check_step(int n, const NoiseSchedule& sched) {
  if (n < 1 || n > sched.N)
    throw std::invalid_argument("diffusion step out of range: " + std::to_string(n));
}

}  // namespace

Latent q_sample(const Latent& s0, int n, const Tensor& eps, const NoiseSchedule& sched) {
  check_step(n, sched);
  if (s0.values.dims != eps.dims)
    throw std::invalid_argument("q_sample: eps shape mismatch");
  double ab = sched.alpha_bar[static_cast<size_t>(n)];
  double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  Latent out;
  out.values = Tensor(s0.values.dims);
  for (size_t i = 0; i < out.values.v.size(); ++i)
    out.values.v[i] = a * s0.values.v[i] + b * eps.v[i];
  out.step = n;
  return out;
}

Latent predict_s0(const Latent& s_n, int n, const Tensor& eps_hat,
                  const NoiseSchedule& sched) {
  check_step(n, sched);
  if (s_n.values.dims != eps_hat.dims)
    throw std::invalid_argument("predict_s0: eps shape mismatch");
  double ab = sched.alpha_bar[static_cast<size_t>(n)];
  double inv_a = 1.0 / std::sqrt(ab), b = std::sqrt(1.0 - ab);
  Latent out;
  out.values = Tensor(s_n.values.dims);
  for (size_t i = 0; i < out.values.v.size(); ++i)
    out.values.v[i] = (s_n.values.v[i] - b * eps_hat.v[i]) * inv_a;
  out.step = 0;
  return out;
}

double ddpm_loss(const Tensor& eps, const Tensor& eps_hat) {
  if (eps.dims != eps_hat.dims) throw std::invalid_argument("ddpm_loss: shape mismatch");
  return mean_sq_diff(eps, eps_hat);
}

double total_loss(double ddpm, double lclap, const LossConfig& cfg) {
  return ddpm + cfg.lambda * lclap;
}

Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, double g) {
  if (eps_cond.dims != eps_uncond.dims)
    throw std::invalid_argument("cfg_combine: shape mismatch");
  Tensor out(eps_cond.dims);
  for (size_t i = 0; i < out.v.size(); ++i)
    out.v[i] = eps_uncond.v[i] + g * (eps_cond.v[i] - eps_uncond.v[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Model.

LdmModel LdmModel::init(const LdmModelConfig& cfg, const NoiseSchedule& sched,
                        uint64_t seed) {
  LdmModel m;
  m.cfg_ = cfg;
  m.sched_ = sched;
  Rng rng(mix_seed(seed, "ldm-init"));
  ParamStore& s = m.store_;
  int B = cfg.base_channels, C = cfg.latent_channels, Td = cfg.time_dim;

  LinearLayer::make(s, "time.fc0", Td, Td, rng);
  LinearLayer::make(s, "time.fc1", Td, Td, rng);
  LinearLayer::make(s, "cond.proj", Td, cfg.cond_dim, rng);

  Conv2dLayer::make(s, "net.in", B, C, 3, 3, 1, 1, 1, 1, rng);
  auto res_block = [&](const std::string& name, int ch) {
    Conv2dLayer::make(s, name + ".c0", ch, ch, 3, 3, 1, 1, 1, 1, rng);
    LinearLayer::make(s, name + ".film", 2 * ch, Td, rng);
    Conv2dLayer::make(s, name + ".c1", ch, ch, 3, 3, 1, 1, 1, 1, rng);
  };
  res_block("net.r1", B);
  Conv2dLayer::make(s, "net.down", 2 * B, B, 3, 3, 2, 2, 1, 1, rng);
  res_block("net.r2", 2 * B);
  res_block("net.mid", 2 * B);
  Conv2dLayer::make(s, "net.up", B, 2 * B, 3, 3, 1, 1, 1, 1, rng);
  res_block("net.r3", B);
  Conv2dLayer::make(s, "net.out", C, B, 3, 3, 1, 1, 1, 1, rng);
  // Predicting exact zero at init keeps early training stable.
  init_zero(s.at("net.out.w"));

  Param& null_cond = s.add("null_cond", {cfg.cond_dim});
  init_normal(null_cond, 0.1, rng);
  return m;
}

Graph::Id LdmModel::eps_forward(Graph& g, Graph::Id s_batch,
                                const std::vector<int>& steps, Graph::Id cond_rows) {
  const Tensor& in = g.val(s_batch);
  if (in.rank() != 4 || in.dims[1] != cfg_.latent_channels)
    throw std::invalid_argument("eps_forward: latent channel mismatch");
  if (static_cast<int>(steps.size()) != in.dims[0])
    throw std::invalid_argument("eps_forward: step count mismatch");
  const Tensor& cr = g.val(cond_rows);
  if (cr.rank() != 2 || cr.dims[0] != in.dims[0] || cr.dims[1] != cfg_.cond_dim)
    throw std::invalid_argument("eps_forward: cond shape mismatch");

  ParamStore& s = store_;
  Graph::Id tfeat = g.constant(timestep_features(steps, cfg_.time_dim, sched_.N));
  Graph::Id ctx = g.linear(tfeat, g.leaf(s.at("time.fc0.w")), g.leaf(s.at("time.fc0.b")));
  ctx = g.silu(ctx);
  ctx = g.linear(ctx, g.leaf(s.at("time.fc1.w")), g.leaf(s.at("time.fc1.b")));
  Graph::Id cctx =
      g.linear(cond_rows, g.leaf(s.at("cond.proj.w")), g.leaf(s.at("cond.proj.b")));
  ctx = g.silu(g.add(ctx, cctx));

  auto res_block = [&](Graph::Id h, const std::string& name) {
    Graph::Id r = g.conv2d(h, g.leaf(s.at(name + ".c0.w")), g.leaf(s.at(name + ".c0.b")),
                           1, 1, 1, 1);
    Graph::Id ss =
        g.linear(ctx, g.leaf(s.at(name + ".film.w")), g.leaf(s.at(name + ".film.b")));
    r = g.film(r, ss);
    r = g.silu(r);
    r = g.conv2d(r, g.leaf(s.at(name + ".c1.w")), g.leaf(s.at(name + ".c1.b")), 1, 1, 1,
                 1);
    return g.add(h, r);
  };

  Graph::Id h = g.conv2d(s_batch, g.leaf(s.at("net.in.w")), g.leaf(s.at("net.in.b")), 1,
                         1, 1, 1);
  Graph::Id skip = res_block(h, "net.r1");
  h = g.conv2d(skip, g.leaf(s.at("net.down.w")), g.leaf(s.at("net.down.b")), 2, 2, 1, 1);
  h = res_block(h, "net.r2");
  h = res_block(h, "net.mid");
  h = g.upsample2x(h);
  h = g.conv2d(h, g.leaf(s.at("net.up.w")), g.leaf(s.at("net.up.b")), 1, 1, 1, 1);
  h = g.add(h, skip);
  h = res_block(h, "net.r3");
  return g.conv2d(h, g.leaf(s.at("net.out.w")), g.leaf(s.at("net.out.b")), 1, 1, 1, 1);
}

Tensor LdmModel::predict_eps(const Tensor& s, int n, const Tensor* cond) {
  check_step(n, sched_);
  if (s.rank() != 3) throw std::invalid_argument("predict_eps: [C,H,W] latent required");
  Tensor batch({1, s.dims[0], s.dims[1], s.dims[2]});
  batch.v = s.v;
  Tensor cond_row({1, cfg_.cond_dim});
  const Tensor& c = cond ? *cond : store_.at("null_cond").value;
  if (c.size() != cfg_.cond_dim)
    throw std::invalid_argument("predict_eps: cond dimension mismatch");
  std::copy(c.v.begin(), c.v.end(), cond_row.v.begin());
  Graph g;
  Graph::Id out = eps_forward(g, g.constant(std::move(batch)), {n},
                              g.constant(std::move(cond_row)));
  Tensor res(s.dims);
  res.v = g.val(out).v;
  return res;
}

Tensor LdmModel::null_cond_value() const {
  return store_.find("null_cond")->value;
}

// ---------------------------------------------------------------------------
// Sampling.

Latent sample_with(const EpsFn& eps_fn, const NoiseSchedule& sched,
                   const std::vector<int>& latent_dims, const Tensor* cond, int steps,
                   double g, uint64_t seed, SampleStats* stats) {
  if (steps < 1) throw std::invalid_argument("sample: steps must be >= 1");
  if (steps > sched.N) throw std::invalid_argument("sample: steps exceed schedule N");
  if (g < 0.0) throw std::invalid_argument("sample: guidance must be >= 0");

  Rng rng(mix_seed(seed, "ddim-init"));
  Tensor s(latent_dims);
  for (double& x : s.v) x = rng.normal();

  Tensor s0(latent_dims);
  for (int k = 0; k < steps; ++k) {
    int n = static_cast<int>((static_cast<long long>(steps - k) * sched.N) / steps);
    int next = k + 1 < steps
                   ? static_cast<int>((static_cast<long long>(steps - k - 1) * sched.N) /
                                      steps)
                   : 0;
    Tensor eps_c = eps_fn(s, n, cond);
    if (stats) ++stats->cond_evals;
    Tensor eps;
    if (g != 1.0) {
      Tensor eps_u = eps_fn(s, n, nullptr);
      if (stats) ++stats->uncond_evals;
      eps = cfg_combine(eps_c, eps_u, g);
    } else {
      eps = std::move(eps_c);
    }
    double ab_n = sched.alpha_bar[static_cast<size_t>(n)];
    double inv_a = 1.0 / std::sqrt(ab_n), bcoef = std::sqrt(1.0 - ab_n);
    for (size_t i = 0; i < s.v.size(); ++i) s0.v[i] = (s.v[i] - bcoef * eps.v[i]) * inv_a;
    double ab_next = sched.alpha_bar[static_cast<size_t>(next)];
    double a2 = std::sqrt(ab_next), b2 = std::sqrt(1.0 - ab_next);
    for (size_t i = 0; i < s.v.size(); ++i) s.v[i] = a2 * s0.v[i] + b2 * eps.v[i];
  }
  Latent out;
  out.values = std::move(s);
  out.step = 0;
  return out;
}

Latent sample(LdmModel& model, const Tensor& cond, int steps, double g, uint64_t seed,
              SampleStats* stats) {
  EpsFn fn = [&model](const Tensor& s, int n, const Tensor* c) {
    return model.predict_eps(s, n, c);
  };
  std::vector<int> dims = {model.config().latent_channels, model.config().latent_height,
                           model.config().latent_width};
  return sample_with(fn, model.schedule(), dims, &cond, steps, g, seed, stats);
}

double latent_clap_loss_term(const Tensor& e_audio, LdmModel& model,
                             LatentClapModel& lclap, const Latent& s_n, int n,
                             const Tensor* cond, const LossConfig& cfg) {
  Tensor eps_hat = model.predict_eps(s_n.values, n, cond);
  Latent s0_hat = predict_s0(s_n, n, eps_hat, model.schedule());
  Tensor e_latent = lclap.encode(s0_hat);
  return step_weight(n, cfg) * distill_loss(e_audio, e_latent);
}

// ---------------------------------------------------------------------------
// Fine-tuning.

std::vector<FinetuneEpochLog> finetune_ldm(LdmModel& model, ClapModel& clap,
                                           LatentClapModel& lclap,
                                           const std::vector<Latent>& latents,
                                           const std::vector<int>& label_ids,
                                           const std::vector<Tensor>& audio_embs,
                                           const FinetuneConfig& cfg) {
  if (latents.empty() || latents.size() != label_ids.size() ||
      latents.size() != audio_embs.size())
    throw std::invalid_argument("finetune_ldm: bad corpus");
  if (cfg.loss.lambda < 0.0) throw std::invalid_argument("finetune_ldm: lambda < 0");
  const NoiseSchedule& sched = model.schedule();
  bool aux = cfg.loss.lambda > 0.0 || cfg.loss.force_aux;

  model.store().set_trainable(true);
  lclap.freeze();
  clap.freeze();
  if (cfg.tuning) {
    clap.store().at("tuning.w").trainable = true;
    clap.store().at("tuning.b").trainable = true;
  }

  // Pre-tuning text projections per label (frozen path), one row per label.
  int L = static_cast<int>(clap.config().labels.size());
  int D = clap.config().embed_dim;
  Tensor text_raw({L, D});
  {
    Graph g;
    Graph::Id emb = g.embedding(g.leaf(clap.store().at("text.table")),
                                [&] {
                                  std::vector<int> ids(static_cast<size_t>(L));
                                  std::iota(ids.begin(), ids.end(), 0);
                                  return ids;
                                }());
    Graph::Id proj = g.linear(emb, g.leaf(clap.store().at("text.proj.w")),
                              g.leaf(clap.store().at("text.proj.b")));
    text_raw.v = g.val(proj).v;
  }

  AdamOptimizer opt_model(cfg.lr);
  AdamOptimizer opt_tuning(cfg.lr);
  std::vector<FinetuneEpochLog> logs;
  std::vector<size_t> order(latents.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.seed, "ldm-epoch", static_cast<uint64_t>(epoch)));
    Rng noise_rng(mix_seed(cfg.seed, "ldm-noise", static_cast<uint64_t>(epoch)));
    Rng drop_rng(mix_seed(cfg.seed, "ldm-drop", static_cast<uint64_t>(epoch)));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1],
                order[static_cast<size_t>(shuffle_rng.uniform_int(0, static_cast<int>(i) - 1))]);

    double sum_ddpm = 0.0, sum_lclap = 0.0, sum_total = 0.0;
    int batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch)) {
      size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch));
      int B = static_cast<int>(end - start);
      const auto& zdims = latents[order[start]].values.dims;
      Tensor s_batch({B, zdims[0], zdims[1], zdims[2]});
      Tensor eps_batch(s_batch.dims);
      std::vector<int> steps(static_cast<size_t>(B));
      std::vector<double> inv_a(static_cast<size_t>(B)), neg_b_over_a(static_cast<size_t>(B)),
          weights(static_cast<size_t>(B));
      std::vector<int> batch_labels(static_cast<size_t>(B));
      std::vector<uint8_t> drop_mask(static_cast<size_t>(B), 0);
      Tensor audio_rows({B, D});

      long long stride = latents[order[start]].values.size();
      for (int bi = 0; bi < B; ++bi) {
        size_t idx = order[start + static_cast<size_t>(bi)];
        int n = noise_rng.uniform_int(1, sched.N);
        steps[static_cast<size_t>(bi)] = n;
        double ab = sched.alpha_bar[static_cast<size_t>(n)];
        double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
        inv_a[static_cast<size_t>(bi)] = 1.0 / a;
        neg_b_over_a[static_cast<size_t>(bi)] = -b / a;
        weights[static_cast<size_t>(bi)] = step_weight(n, cfg.loss);
        const Tensor& z = latents[idx].values;
        for (long long i = 0; i < stride; ++i) {
          double e = noise_rng.normal();
          eps_batch.v[static_cast<size_t>(bi * stride + i)] = e;
          s_batch.v[static_cast<size_t>(bi * stride + i)] =
              a * z.v[static_cast<size_t>(i)] + b * e;
        }
        batch_labels[static_cast<size_t>(bi)] = label_ids[idx];
        drop_mask[static_cast<size_t>(bi)] =
            drop_rng.uniform() < cfg.loss.cond_dropout_p ? 1 : 0;
        for (int d = 0; d < D; ++d) audio_rows.at2(bi, d) = audio_embs[idx][d];
      }

      Graph g;
      // Condition rows: frozen text projection -> optional tuning -> norm,
      // with per-sample null substitution for classifier-free guidance.
      Tensor raw_rows({B, D});
      for (int bi = 0; bi < B; ++bi)
        for (int d = 0; d < D; ++d)
          raw_rows.at2(bi, d) = text_raw.at2(batch_labels[static_cast<size_t>(bi)], d);
      Graph::Id cond_rows = g.constant(std::move(raw_rows));
      if (cfg.tuning)
        cond_rows = g.linear(cond_rows, g.leaf(clap.store().at("tuning.w")),
                             g.leaf(clap.store().at("tuning.b")));
      cond_rows = g.l2norm_rows(cond_rows);
      cond_rows = g.row_mix(cond_rows, g.leaf(model.null_cond_param()), drop_mask);

      Graph::Id s_node = g.constant(s_batch);
      Graph::Id eps_hat = model.eps_forward(g, s_node, steps, cond_rows);
      Graph::Id ddpm = g.mse(eps_hat, g.constant(eps_batch));

      Graph::Id total = ddpm;
      double lclap_value = 0.0;
      if (aux) {
        Graph::Id s0_hat = g.add(g.scale_rows(s_node, inv_a),
                                 g.scale_rows(eps_hat, neg_b_over_a));
        Graph::Id e_latent = lclap.forward(g, s0_hat);
        Graph::Id per_row = g.mse_rows(e_latent, g.constant(audio_rows));
        Graph::Id lclap_term = g.weighted_mean(per_row, weights);
        lclap_value = g.val(lclap_term).item();
        total = g.add(ddpm, g.scale(lclap_term, cfg.loss.lambda));
      }

      model.store().zero_grad();
      clap.store().zero_grad();
      double total_value = g.val(total).item();
      g.backward(total);
      opt_model.step(model.store());
      if (cfg.tuning) opt_tuning.step(clap.store());

      sum_ddpm += g.val(ddpm).item();
      sum_lclap += lclap_value;
      sum_total += total_value;
      ++batches;
    }
    logs.push_back({epoch, batches ? sum_ddpm / batches : 0.0,
                    batches ? sum_lclap / batches : 0.0,
                    batches ? sum_total / batches : 0.0});
  }
  return logs;
}

}  // namespace foley
