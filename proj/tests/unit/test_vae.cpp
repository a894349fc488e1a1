// Copyright (c) 2026 The foley-synth Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <vector>

#include "foley/vae.hpp"
#include "test_util.hpp"

using namespace foley;
using test::grad_check;

namespace {

VaeModelConfig micro_config() {
  VaeModelConfig c;
  c.latent_channels = 2;
  c.ratio = 4;
  c.channels = {4, 8};
  c.mel_bins = 8;
  c.kl_weight = 1e-2;
  return c;
}

MelSpec random_mel(int bins, int frames, uint64_t seed) {
  MelSpec m;
  m.config.mel_bins = bins;
  m.values = Tensor({bins, frames});
  Rng rng(seed);
  for (double& v : m.values.v) v = rng.uniform(-2.0, 2.0);
  return m;
}

}  // namespace

TEST_SUITE("vae") {

TEST_CASE("latent shapes follow C x F/r x T/r") {
  VaeModelConfig desk;
  desk.latent_channels = 4;
  desk.ratio = 4;
  desk.channels = {8, 16};
  desk.mel_bins = 32;
  VaeModel m = VaeModel::init(desk, 3);
  MelSpec mel = random_mel(32, 256, 1);
  Latent z = m.encode(mel, VaeModel::EncodeMode::kMean);
  CHECK(z.values.dims == std::vector<int>{4, 8, 64});
  MelSpec rec = m.decode(z, mel.config);
  CHECK(rec.values.dims == std::vector<int>{32, 256});

  VaeModel micro = VaeModel::init(micro_config(), 4);
  Latent z2 = micro.encode(random_mel(8, 16, 2), VaeModel::EncodeMode::kMean);
  CHECK(z2.values.dims == std::vector<int>{2, 2, 4});

  MelSpec bad = random_mel(8, 14, 3);  // 14 not divisible by 4
  CHECK_THROWS(micro.encode(bad, VaeModel::EncodeMode::kMean));
}

TEST_CASE("mean encode and decode are deterministic; sampling is seeded") {
  VaeModel m = VaeModel::init(micro_config(), 5);
  MelSpec mel = random_mel(8, 16, 9);
  Latent a = m.encode(mel, VaeModel::EncodeMode::kMean);
  Latent b = m.encode(mel, VaeModel::EncodeMode::kMean);
  CHECK(a.values.v == b.values.v);
  Latent s1 = m.encode(mel, VaeModel::EncodeMode::kSample, 11);
  Latent s2 = m.encode(mel, VaeModel::EncodeMode::kSample, 11);
  Latent s3 = m.encode(mel, VaeModel::EncodeMode::kSample, 12);
  CHECK(s1.values.v == s2.values.v);
  CHECK(max_abs_diff(s1.values, s3.values) > 0.0);
  MelSpec d1 = m.decode(a, mel.config);
  MelSpec d2 = m.decode(a, mel.config);
  CHECK(d1.values.v == d2.values.v);
}

TEST_CASE("KL term analytic values") {
  // mu = 0, logvar = 0 -> 0; mu = 1, sigma = 1 -> 0.5 per element.
  Graph g;
  Graph::Id mu0 = g.constant(Tensor({1, 2, 2, 2}, 0.0));
  Graph::Id lv0 = g.constant(Tensor({1, 2, 2, 2}, 0.0));
  CHECK(g.val(kl_divergence_mean(g, mu0, lv0)).item() ==
        doctest::Approx(0.0).epsilon(1e-12));
  Graph::Id mu1 = g.constant(Tensor({1, 2, 2, 2}, 1.0));
  CHECK(g.val(kl_divergence_mean(g, mu1, lv0)).item() ==
        doctest::Approx(0.5).epsilon(1e-12));
  // KL >= 0 on random inputs.
  Rng rng(21);
  Graph::Id mur = g.constant(test::random_tensor({1, 2, 3, 3}, rng));
  Graph::Id lvr = g.constant(test::random_tensor({1, 2, 3, 3}, rng));
  CHECK(g.val(kl_divergence_mean(g, mur, lvr)).item() >= 0.0);
}

TEST_CASE("kl_weight zero reduces the loss to reconstruction MSE") {
  VaeModelConfig cfg = micro_config();
  cfg.kl_weight = 0.0;
  VaeModel m = VaeModel::init(cfg, 6);
  MelSpec mel = random_mel(8, 16, 30);
  Tensor batch = m.standardize(mel);
  Rng noise(55);
  VaeLossParts parts = vae_loss(m, batch, noise, false);
  CHECK(parts.total == parts.recon);
  CHECK(parts.kl >= 0.0);

  VaeModel m2 = VaeModel::init(micro_config(), 6);
  Rng noise2(55);
  VaeLossParts parts2 = vae_loss(m2, batch, noise2, false);
  CHECK(parts2.total ==
        doctest::Approx(parts2.recon + 1e-2 * parts2.kl).epsilon(1e-12));
}

TEST_CASE("ELBO gradients match finite differences") {
  VaeModel m = VaeModel::init(micro_config(), 7);
  m.store().set_trainable(true);
  MelSpec mel = random_mel(8, 8, 40);
  Tensor batch = m.standardize(mel);
  auto make_eval = [&](bool grads) {
    return [&m, batch, grads] {
      Rng noise(77);  // frozen noise so the loss is a deterministic function
      return vae_loss(m, batch, noise, grads).total;
    };
  };
  double err = grad_check(m.store(), make_eval(false), make_eval(true));
  CHECK(err <= 1e-3);
  CHECK(err < 1e-6);
}

TEST_CASE("training reduces the loss and estimates statistics") {
  std::vector<MelSpec> mels;
  for (int i = 0; i < 12; ++i) mels.push_back(random_mel(8, 16, 400 + i));
  VaeModel m = VaeModel::init(micro_config(), 8);
  VaeTrainConfig tc;
  tc.epochs = 6;
  tc.batch = 4;
  tc.lr = 3e-3;
  auto logs = train_vae(m, mels, tc);
  REQUIRE(logs.size() == 6);
  CHECK(logs.back().loss < logs.front().loss);
  CHECK(m.mel_std > 0.0);
  CHECK(m.latent_std > 0.0);
  CHECK_THROWS(train_vae(m, {}, tc));

  // Determinism of a full training run.
  VaeModel m2 = VaeModel::init(micro_config(), 8);
  train_vae(m2, mels, tc);
  CHECK(m.store().value_hash() == m2.store().value_hash());
}

}  // TEST_SUITE
