// Copyright (c) 2026 The foley-synth Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <vector>

#include "foley/ldm.hpp"
#include "test_util.hpp"

using namespace foley;
using test::grad_check;
using test::random_tensor;

namespace {

LdmModelConfig micro_ldm_config() {
  LdmModelConfig c;
  c.latent_channels = 2;
  c.latent_height = 4;
  c.latent_width = 8;
  c.base_channels = 4;
  c.time_dim = 8;
  c.cond_dim = 8;
  return c;
}

LatentClapModelConfig micro_lclap_config() {
  LatentClapModelConfig c;
  c.channels = {4, 8};
  c.latent_channels = 2;
  c.embed_dim = 8;
  return c;
}

Latent random_latent(std::vector<int> dims, uint64_t seed) {
  Rng rng(seed);
  Latent z;
  z.values = random_tensor(std::move(dims), rng);
  return z;
}

Tensor unit_vec(int dim, uint64_t seed) {
  Rng rng(seed);
  Tensor t = random_tensor({dim}, rng);
  double n = l2_norm(t);
  for (auto& x : t.v) x /= n;
  return t;
}

}  // namespace

TEST_SUITE("ldm") {

TEST_CASE("make_schedule: analytic cases and the product-loop oracle") {
  NoiseSchedule s1 = make_schedule(1, 0.25, 0.25);
  CHECK(s1.alpha_bar[1] == doctest::Approx(0.75).epsilon(1e-15));

  NoiseSchedule s2 = make_schedule(2, 0.1, 0.2);
  CHECK(s2.beta[1] == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(s2.beta[2] == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(s2.alpha_bar[2] == doctest::Approx(0.72).epsilon(1e-15));

  NoiseSchedule def = make_schedule(1000, 1e-4, 2e-2);
  // Independent scalar product loop.
  double prod = 1.0;
  for (int n = 1; n <= 1000; ++n) {
    double beta = 1e-4 + (2e-2 - 1e-4) * static_cast<double>(n - 1) / 999.0;
    prod *= 1.0 - beta;
  }
  CHECK(def.alpha_bar[1000] == doctest::Approx(prod).epsilon(1e-12));
  CHECK(def.alpha_bar[1000] < 5e-5);
  CHECK(def.alpha_bar[0] == 1.0);
  for (int n = 1; n <= 1000; ++n) {
    CHECK(def.beta[n] > 0.0);
    CHECK(def.beta[n] < 1.0);
    if (n > 1) CHECK(def.beta[n] >= def.beta[n - 1]);
    CHECK(def.alpha_bar[n] < def.alpha_bar[n - 1]);
  }

  CHECK_THROWS(make_schedule(0, 1e-4, 2e-2));
  CHECK_THROWS(make_schedule(10, 0.0, 0.1));
  CHECK_THROWS(make_schedule(10, 0.2, 0.1));
  CHECK_THROWS(make_schedule(10, 0.5, 1.0));
}

TEST_CASE("step_weight: paper values, monotone, multiplicative") {
  LossConfig cfg;
  CHECK(step_weight(0, cfg) == 1.0);
  CHECK(step_weight(200, cfg) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(step_weight(400, cfg) == doctest::Approx(0.01).epsilon(1e-12));
  for (int n = 1; n <= 1000; n += 13)
    CHECK(step_weight(n, cfg) < step_weight(n - 1, cfg));
  for (int a : {10, 150, 380})
    for (int b : {5, 200, 470})
      CHECK(step_weight(a + b, cfg) ==
            doctest::Approx(step_weight(a, cfg) * step_weight(b, cfg)).epsilon(1e-12));
  CHECK(step_weight(1000, cfg) > 0.0);
  CHECK(step_weight(1, cfg) <= 1.0);
  CHECK_THROWS(step_weight(-1, cfg));
}

TEST_CASE("q_sample: formula collapses and the Gaussianization oracle") {
  NoiseSchedule sched = make_schedule(1000, 1e-4, 2e-2);
  Latent s0 = random_latent({2, 2, 2}, 5);
  Tensor zero({2, 2, 2}, 0.0);
  Latent sn = q_sample(s0, 500, zero, sched);
  double root_ab = std::sqrt(sched.alpha_bar[500]);
  for (size_t i = 0; i < sn.values.v.size(); ++i)
    CHECK(sn.values.v[i] == doctest::Approx(root_ab * s0.values.v[i]).epsilon(1e-12));
  CHECK(sn.step == 500);

  // n = 1 with a tiny beta keeps s_n within sqrt(beta)-amplitude of s0.
  Rng rng(6);
  Tensor eps = random_tensor({2, 2, 2}, rng);
  Latent s1 = q_sample(s0, 1, eps, sched);
  double bound = std::sqrt(sched.beta[1]) * (max_abs(eps) + max_abs(s0.values)) + 1e-9;
  CHECK(max_abs_diff(s1.values, s0.values) < bound);

  CHECK_THROWS(q_sample(s0, 0, eps, sched));
  CHECK_THROWS(q_sample(s0, 1001, eps, sched));

  // Monte Carlo at n = N: per-element mean within +-0.05, variance in [0.9, 1.1].
  const int draws = 10000;
  Latent base = random_latent({2, 2, 2}, 7);
  std::vector<double> sum(8, 0.0), sumsq(8, 0.0);
  Rng mc(8);
  for (int d = 0; d < draws; ++d) {
    Tensor e({2, 2, 2});
    for (auto& x : e.v) x = mc.normal();
    Latent s = q_sample(base, 1000, e, sched);
    for (int i = 0; i < 8; ++i) {
      sum[static_cast<size_t>(i)] += s.values.v[static_cast<size_t>(i)];
      sumsq[static_cast<size_t>(i)] +=
          s.values.v[static_cast<size_t>(i)] * s.values.v[static_cast<size_t>(i)];
    }
  }
  for (int i = 0; i < 8; ++i) {
    double mean = sum[static_cast<size_t>(i)] / draws;
    double var = sumsq[static_cast<size_t>(i)] / draws - mean * mean;
    CHECK(std::fabs(mean) < 0.05);
    CHECK(var > 0.9);
    CHECK(var < 1.1);
  }
}

TEST_CASE("predict_s0 inverts q_sample") {
  NoiseSchedule sched = make_schedule(1000, 1e-4, 2e-2);
  Latent s0 = random_latent({2, 3, 4}, 9);
  Rng rng(10);
  Tensor eps = random_tensor({2, 3, 4}, rng);
  for (int n : {1, 250, 500, 999, 1000}) {
    Latent sn = q_sample(s0, n, eps, sched);
    Latent rec = predict_s0(sn, n, eps, sched);
    CHECK(max_abs_diff(rec.values, s0.values) < 1e-4);
    if (n <= 500) CHECK(max_abs_diff(rec.values, s0.values) < 1e-5);
  }
  // eps_hat = 0 collapses to s_n / sqrt(alpha_bar).
  Latent sn = q_sample(s0, 300, eps, sched);
  Tensor zero({2, 3, 4}, 0.0);
  Latent rec = predict_s0(sn, 300, zero, sched);
  double inv = 1.0 / std::sqrt(sched.alpha_bar[300]);
  for (size_t i = 0; i < rec.values.v.size(); ++i)
    CHECK(rec.values.v[i] == doctest::Approx(sn.values.v[i] * inv).epsilon(1e-12));
  CHECK_THROWS(predict_s0(sn, 0, zero, sched));
}

TEST_CASE("ddpm_loss and total_loss analytic cases") {
  Rng rng(11);
  Tensor a = random_tensor({2, 3, 4}, rng), b = random_tensor({2, 3, 4}, rng);
  CHECK(ddpm_loss(a, a) == 0.0);
  Tensor zeros({2, 2, 2}, 0.0), ones({2, 2, 2}, 1.0);
  CHECK(ddpm_loss(zeros, ones) == doctest::Approx(1.0).epsilon(1e-15));
  double oracle = 0.0;
  for (size_t i = 0; i < a.v.size(); ++i) oracle += (a.v[i] - b.v[i]) * (a.v[i] - b.v[i]);
  oracle /= static_cast<double>(a.v.size());
  CHECK(ddpm_loss(a, b) == doctest::Approx(oracle).epsilon(1e-15));
  CHECK_THROWS(ddpm_loss(a, zeros));

  LossConfig lc;
  lc.lambda = 0.0;
  CHECK(total_loss(0.37, 123.0, lc) == 0.37);
  lc.lambda = 2000.0;
  CHECK(total_loss(0.5, 0.001, lc) == doctest::Approx(2.5).epsilon(1e-12));
  lc.lambda = 1000.0;
  CHECK(total_loss(0.5, 0.001, lc) == doctest::Approx(1.5).epsilon(1e-12));
  // Linear in lclap with slope lambda.
  lc.lambda = 17.0;
  double l0 = total_loss(0.3, 0.0, lc);
  CHECK(total_loss(0.3, 0.2, lc) - l0 == doctest::Approx(17.0 * 0.2).epsilon(1e-12));
}

TEST_CASE("cfg_combine endpoints and identity property") {
  Rng rng(12);
  Tensor c = random_tensor({2, 2, 2}, rng), u = random_tensor({2, 2, 2}, rng);
  Tensor g1 = cfg_combine(c, u, 1.0);
  CHECK(g1.v == c.v);
  Tensor g0 = cfg_combine(c, u, 0.0);
  CHECK(g0.v == u.v);
  Tensor ones({2, 2, 2}, 1.0), zeros({2, 2, 2}, 0.0);
  Tensor g2 = cfg_combine(ones, zeros, 2.0);
  for (double v : g2.v) CHECK(v == doctest::Approx(2.0).epsilon(1e-15));
  for (double g : {0.0, 0.7, 1.0, 2.5}) {
    Tensor same = cfg_combine(c, c, g);
    CHECK(max_abs_diff(same, c) == 0.0);
  }
  CHECK_THROWS(cfg_combine(c, Tensor({2, 2}, 0.0), 1.0));
}

TEST_CASE("predict_eps: determinism, shape, null branch equivalence") {
  NoiseSchedule sched = make_schedule(100, 1e-4, 2e-2);
  LdmModel m = LdmModel::init(micro_ldm_config(), sched, 13);
  Rng rng(14);
  Tensor s = random_tensor({2, 4, 8}, rng);
  Tensor cond = unit_vec(8, 15);
  Tensor e1 = m.predict_eps(s, 50, &cond);
  Tensor e2 = m.predict_eps(s, 50, &cond);
  CHECK(e1.v == e2.v);
  CHECK(e1.dims == s.dims);
  Tensor null_val = m.null_cond_value();
  Tensor via_null = m.predict_eps(s, 50, nullptr);
  Tensor via_explicit = m.predict_eps(s, 50, &null_val);
  CHECK(via_null.v == via_explicit.v);
  CHECK_THROWS(m.predict_eps(s, 0, &cond));
  CHECK_THROWS(m.predict_eps(random_tensor({3, 4, 8}, rng), 50, &cond));
}

TEST_CASE("sampler recovers the planted clean latent with an oracle network") {
  NoiseSchedule sched = make_schedule(50, 1e-4, 2e-2);
  Latent target = random_latent({2, 4, 4}, 16);
  EpsFn oracle = [&](const Tensor& s, int n, const Tensor*) {
    double ab = sched.alpha_bar[static_cast<size_t>(n)];
    double root_ab = std::sqrt(ab), root_1mab = std::sqrt(1.0 - ab);
    Tensor eps(s.dims);
    for (size_t i = 0; i < s.v.size(); ++i)
      eps.v[i] = (s.v[i] - root_ab * target.values.v[i]) / root_1mab;
    return eps;
  };
  SampleStats stats;
  Latent out = sample_with(oracle, sched, {2, 4, 4}, nullptr, 50, 1.0, 99, &stats);
  CHECK(max_abs_diff(out.values, target.values) < 1e-3);
  CHECK(stats.cond_evals == 50);
  CHECK(stats.uncond_evals == 0);
}

TEST_CASE("sample: determinism, guidance branch accounting, errors") {
  NoiseSchedule sched = make_schedule(40, 1e-4, 2e-2);
  LdmModel m = LdmModel::init(micro_ldm_config(), sched, 17);
  Tensor cond = unit_vec(8, 18);
  SampleStats g1_stats;
  Latent a = sample(m, cond, 10, 1.0, 5, &g1_stats);
  Latent b = sample(m, cond, 10, 1.0, 5);
  CHECK(a.values.v == b.values.v);
  CHECK(a.values.dims == std::vector<int>{2, 4, 8});
  CHECK(g1_stats.uncond_evals == 0);
  CHECK(g1_stats.cond_evals == 10);

  SampleStats g2_stats;
  Latent c = sample(m, cond, 10, 2.0, 5, &g2_stats);
  CHECK(g2_stats.uncond_evals == 10);
  CHECK(max_abs_diff(a.values, c.values) > 0.0);

  Latent d = sample(m, cond, 10, 1.0, 6);
  CHECK(max_abs_diff(a.values, d.values) > 0.0);

  CHECK_THROWS(sample(m, cond, 0, 1.0, 5));
  CHECK_THROWS(sample(m, cond, 41, 1.0, 5));
  CHECK_THROWS(sample(m, cond, 10, -0.5, 5));
}

TEST_CASE("latent_clap_loss_term composes w(n) with the distillation error") {
  NoiseSchedule sched = make_schedule(1000, 1e-4, 2e-2);
  LdmModel m = LdmModel::init(micro_ldm_config(), sched, 19);
  LatentClapModel lclap = LatentClapModel::init(micro_lclap_config(), 20);
  Latent s_n = random_latent({2, 4, 8}, 21);
  s_n.step = 400;
  Tensor cond = unit_vec(8, 22);
  LossConfig lc;

  // Composition oracle: recompute the pieces explicitly.
  Tensor e_audio = unit_vec(8, 23);
  double term = latent_clap_loss_term(e_audio, m, lclap, s_n, 400, &cond, lc);
  Tensor eps_hat = m.predict_eps(s_n.values, 400, &cond);
  Latent s0_hat = predict_s0(s_n, 400, eps_hat, sched);
  Tensor e_latent = lclap.encode(s0_hat);
  double oracle = step_weight(400, lc) * distill_loss(e_audio, e_latent);
  CHECK(term == doctest::Approx(oracle).epsilon(1e-12));

  // Zero when the target equals the latent embedding, at any step.
  for (int n : {10, 400, 900}) {
    Tensor eh = m.predict_eps(s_n.values, n, &cond);
    Tensor et = lclap.encode(predict_s0(s_n, n, eh, sched));
    CHECK(latent_clap_loss_term(et, m, lclap, s_n, n, &cond, lc) ==
          doctest::Approx(0.0).epsilon(1e-15));
  }

  // w factorization: identical embedding error scales by w(400)/w(200) = 0.1.
  CHECK(step_weight(400, lc) / step_weight(200, lc) ==
        doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("total loss gradients flow through the full composite graph") {
  NoiseSchedule sched = make_schedule(100, 1e-3, 2e-2);
  LdmModel m = LdmModel::init(micro_ldm_config(), sched, 24);
  LatentClapModel lclap = LatentClapModel::init(micro_lclap_config(), 25);
  lclap.freeze();
  m.store().set_trainable(true);

  const int B = 3;
  Rng rng(26);
  Tensor s_batch = random_tensor({B, 2, 4, 8}, rng);
  Tensor eps_batch = random_tensor({B, 2, 4, 8}, rng);
  Tensor audio_rows = random_tensor({B, 8}, rng, 0.4);
  Tensor cond_rows = random_tensor({B, 8}, rng, 0.4);
  std::vector<int> steps = {10, 45, 90};
  LossConfig lc;
  lc.lambda = 5.0;
  std::vector<double> inv_a(B), nboa(B), w(B);
  for (int i = 0; i < B; ++i) {
    double ab = sched.alpha_bar[static_cast<size_t>(steps[static_cast<size_t>(i)])];
    inv_a[static_cast<size_t>(i)] = 1.0 / std::sqrt(ab);
    nboa[static_cast<size_t>(i)] = -std::sqrt(1.0 - ab) / std::sqrt(ab);
    w[static_cast<size_t>(i)] = step_weight(steps[static_cast<size_t>(i)], lc);
  }
  std::vector<uint8_t> mask = {0, 1, 0};  // exercise the null embedding too

  auto build = [&](bool grads) {
    Graph g;
    Graph::Id cond = g.row_mix(g.constant(cond_rows), g.leaf(m.null_cond_param()), mask);
    Graph::Id s_node = g.constant(s_batch);
    Graph::Id eps_hat = m.eps_forward(g, s_node, steps, cond);
    Graph::Id ddpm = g.mse(eps_hat, g.constant(eps_batch));
    Graph::Id s0_hat = g.add(g.scale_rows(s_node, inv_a), g.scale_rows(eps_hat, nboa));
    Graph::Id e_latent = lclap.forward(g, s0_hat);
    Graph::Id per_row = g.mse_rows(e_latent, g.constant(audio_rows));
    Graph::Id total = g.add(ddpm, g.scale(g.weighted_mean(per_row, w), lc.lambda));
    double v = g.val(total).item();
    if (grads) g.backward(total);
    return v;
  };
  double err = grad_check(
      m.store(), [&] { return build(false); }, [&] { return build(true); });
  CHECK(err <= 1e-3);
  CHECK(err < 1e-6);

  // The frozen encoder must receive no gradient.
  for (Param* p : lclap.store().params()) CHECK(max_abs(p->grad) == 0.0);
}

TEST_CASE("finetune: lambda=0 with forced aux equals the pure DDPM trajectory") {
  NoiseSchedule sched = make_schedule(60, 1e-4, 2e-2);
  ClapModelConfig cc;
  cc.embed_dim = 8;
  cc.label_embed_dim = 4;
  cc.channels = {4, 8};
  cc.mel_bins = 8;
  cc.labels = {"rain", "keyboard"};
  cc.tuning_enabled = true;

  std::vector<Latent> latents;
  std::vector<int> ids;
  std::vector<Tensor> audio;
  for (int i = 0; i < 8; ++i) {
    latents.push_back(random_latent({2, 4, 8}, 700 + static_cast<uint64_t>(i)));
    ids.push_back(i % 2);
    audio.push_back(unit_vec(8, 800 + static_cast<uint64_t>(i)));
  }

  FinetuneConfig fc;
  fc.epochs = 2;
  fc.batch = 4;
  fc.lr = 1e-3;
  fc.seed = 31;
  fc.loss.lambda = 0.0;
  fc.loss.cond_dropout_p = 0.1;

  auto run = [&](bool force_aux) {
    ClapModel clap = ClapModel::init(cc, 30);
    LdmModel m = LdmModel::init(micro_ldm_config(), sched, 29);
    LatentClapModel lclap = LatentClapModel::init(micro_lclap_config(), 28);
    FinetuneConfig cfg = fc;
    cfg.loss.force_aux = force_aux;
    finetune_ldm(m, clap, lclap, latents, ids, audio, cfg);
    return m.store().value_hash();
  };
  CHECK(run(true) == run(false));
}

TEST_CASE("finetune: loss decreases, frozen parts stay frozen, dropout contract") {
  NoiseSchedule sched = make_schedule(60, 1e-4, 2e-2);
  ClapModelConfig cc;
  cc.embed_dim = 8;
  cc.label_embed_dim = 4;
  cc.channels = {4, 8};
  cc.mel_bins = 8;
  cc.labels = {"rain", "keyboard"};
  cc.tuning_enabled = true;
  ClapModel clap = ClapModel::init(cc, 40);
  LdmModel m = LdmModel::init(micro_ldm_config(), sched, 41);
  LatentClapModel lclap = LatentClapModel::init(micro_lclap_config(), 42);

  std::vector<Latent> latents;
  std::vector<int> ids;
  std::vector<Tensor> audio;
  for (int i = 0; i < 12; ++i) {
    latents.push_back(random_latent({2, 4, 8}, 900 + static_cast<uint64_t>(i)));
    ids.push_back(i % 2);
    audio.push_back(unit_vec(8, 1000 + static_cast<uint64_t>(i)));
  }

  uint64_t clap_hash = clap.store().value_hash();
  uint64_t lclap_hash = lclap.store().value_hash();
  Tensor null_before = m.null_cond_value();

  FinetuneConfig fc;
  fc.epochs = 8;
  fc.batch = 6;
  fc.lr = 2e-3;
  fc.seed = 43;
  fc.loss.lambda = 2.0;
  fc.loss.cond_dropout_p = 0.0;
  auto logs = finetune_ldm(m, clap, lclap, latents, ids, audio, fc);
  REQUIRE(logs.size() == 8);
  CHECK(logs.back().total < logs.front().total);
  CHECK(clap.store().value_hash() == clap_hash);
  CHECK(lclap.store().value_hash() == lclap_hash);
  // cond_dropout_p = 0: the null embedding is never used, hence unchanged.
  CHECK(max_abs_diff(null_before, m.null_cond_value()) == 0.0);

  // With dropout on, the null embedding trains.
  LdmModel m2 = LdmModel::init(micro_ldm_config(), sched, 41);
  FinetuneConfig fc2 = fc;
  fc2.loss.cond_dropout_p = 0.5;
  finetune_ldm(m2, clap, lclap, latents, ids, audio, fc2);
  CHECK(max_abs_diff(null_before, m2.null_cond_value()) > 0.0);

  FinetuneConfig bad = fc;
  bad.loss.lambda = -1.0;
  CHECK_THROWS(finetune_ldm(m, clap, lclap, latents, ids, audio, bad));
}

TEST_CASE("finetune with tuning flag trains only the tuning layer in CLAP") {
  NoiseSchedule sched = make_schedule(60, 1e-4, 2e-2);
  ClapModelConfig cc;
  cc.embed_dim = 8;
  cc.label_embed_dim = 4;
  cc.channels = {4, 8};
  cc.mel_bins = 8;
  cc.labels = {"rain", "keyboard"};
  cc.tuning_enabled = true;
  ClapModel clap = ClapModel::init(cc, 50);
  LdmModel m = LdmModel::init(micro_ldm_config(), sched, 51);
  LatentClapModel lclap = LatentClapModel::init(micro_lclap_config(), 52);

  std::vector<Latent> latents;
  std::vector<int> ids;
  std::vector<Tensor> audio;
  for (int i = 0; i < 8; ++i) {
    latents.push_back(random_latent({2, 4, 8}, 1100 + static_cast<uint64_t>(i)));
    ids.push_back(i % 2);
    audio.push_back(unit_vec(8, 1200 + static_cast<uint64_t>(i)));
  }
  Tensor table_before = clap.store().at("text.table").value;
  Tensor tuning_before = clap.store().at("tuning.w").value;

  FinetuneConfig fc;
  fc.epochs = 4;
  fc.batch = 4;
  fc.lr = 2e-3;
  fc.seed = 53;
  fc.loss.lambda = 2.0;
  fc.tuning = true;
  finetune_ldm(m, clap, lclap, latents, ids, audio, fc);
  CHECK(max_abs_diff(table_before, clap.store().at("text.table").value) == 0.0);
  CHECK(max_abs_diff(tuning_before, clap.store().at("tuning.w").value) > 0.0);
}

}  // TEST_SUITE
