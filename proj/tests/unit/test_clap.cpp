// Copyright (c) 2026 The foley-synth Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <vector>

#include "foley/clap.hpp"
#include "foley/dataset.hpp"
#include "test_util.hpp"

using namespace foley;
using test::grad_check;

namespace {

ClapModelConfig micro_config() {
  ClapModelConfig c;
  c.embed_dim = 8;
  c.label_embed_dim = 6;
  c.channels = {4, 8};
  c.mel_bins = 8;
  c.labels = {"rain", "keyboard", "dog_bark"};
  c.tuning_enabled = true;
  return c;
}

MelSpec random_mel(int bins, int frames, uint64_t seed) {
  MelSpec m;
  m.config.mel_bins = bins;
  m.values = Tensor({bins, frames});
  Rng rng(seed);
  for (double& v : m.values.v) v = rng.uniform(-11.0, 5.0);
  return m;
}

}  // namespace

TEST_SUITE("clap") {

TEST_CASE("encode_text: deterministic unit vectors, tuning identity") {
  ClapModel m = ClapModel::init(micro_config(), 5);
  const auto& labels = m.config().labels;
  Tensor a = m.encode_text(prompt_of("rain", labels));
  Tensor b = m.encode_text(prompt_of("rain", labels));
  CHECK(a.v == b.v);
  CHECK(l2_norm(a) == doctest::Approx(1.0).epsilon(1e-6));
  // Identity-initialized tuning layer changes nothing.
  Tensor tuned = m.encode_text(prompt_of("rain", labels), /*use_tuning=*/true);
  CHECK(max_abs_diff(a, tuned) < 1e-12);
  CHECK_THROWS(m.encode_text("This is a sound of thunder"));
  CHECK_THROWS(m.encode_text("rain"));
}

TEST_CASE("encode_audio: unit norm, any frame count, shape errors") {
  ClapModel m = ClapModel::init(micro_config(), 6);
  Tensor e1 = m.encode_audio(random_mel(8, 16, 1));
  Tensor e2 = m.encode_audio(random_mel(8, 32, 2));
  CHECK(l2_norm(e1) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(l2_norm(e2) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(e1.dims == std::vector<int>{8});
  CHECK_THROWS(m.encode_audio(random_mel(16, 16, 3)));  // wrong mel_bins
}

TEST_CASE("cosine_similarity basics") {
  Tensor v = Tensor::from({3}, {1.0, 2.0, -1.0});
  CHECK(cosine_similarity(v, v) == doctest::Approx(1.0).epsilon(1e-12));
  Tensor e1 = Tensor::from({2}, {1.0, 0.0});
  Tensor e2 = Tensor::from({2}, {0.0, 1.0});
  CHECK(cosine_similarity(e1, e2) == doctest::Approx(0.0).epsilon(1e-12));
  Tensor nv = Tensor::from({3}, {-1.0, -2.0, 1.0});
  CHECK(cosine_similarity(v, nv) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK_THROWS(cosine_similarity(v, e1));
  CHECK_THROWS(cosine_similarity(e1, Tensor::from({2}, {0.0, 0.0})));
}

TEST_CASE("info_nce analytic values") {
  // B=2 with logits [[2,0],[0,2]]: loss = -log(e^2 / (e^2 + 1)).
  Tensor logits = Tensor::from({2, 2}, {2.0, 0.0, 0.0, 2.0});
  double expected = -std::log(std::exp(2.0) / (std::exp(2.0) + 1.0));
  CHECK(info_nce_from_logits(logits) == doctest::Approx(expected).epsilon(1e-9));
  CHECK(info_nce_from_logits(logits) == doctest::Approx(0.126928).epsilon(1e-4));

  // All-identical embeddings: uniform rows, loss = log B.
  for (int B : {2, 4, 7}) {
    Tensor uniform({B, B}, 0.37);
    CHECK(info_nce_from_logits(uniform) == doctest::Approx(std::log(B)).epsilon(1e-9));
  }

  // Perfect alignment with growing margin drives the loss to zero.
  double prev = 1e9;
  for (double margin : {2.0, 5.0, 10.0, 20.0}) {
    Tensor strong({3, 3});
    for (int i = 0; i < 3; ++i) strong.at2(i, i) = margin;
    double loss = info_nce_from_logits(strong);
    CHECK(loss < prev);
    prev = loss;
  }
  CHECK(prev < 1e-6);
}

TEST_CASE("contrastive_loss contracts") {
  ClapModel m = ClapModel::init(micro_config(), 7);
  MelSpec m0 = random_mel(8, 16, 10), m1 = random_mel(8, 16, 11),
          m2 = random_mel(8, 16, 12), m3 = random_mel(8, 16, 13);
  std::vector<const MelSpec*> batch = {&m0, &m1, &m2, &m3};
  std::vector<int> ids = {0, 1, 2, 0};
  double loss = contrastive_loss(m, batch, ids);
  CHECK(loss >= 0.0);

  // Permutation invariance (same set, different order).
  std::vector<const MelSpec*> perm = {&m2, &m0, &m3, &m1};
  std::vector<int> perm_ids = {2, 0, 0, 1};
  CHECK(contrastive_loss(m, perm, perm_ids) == doctest::Approx(loss).epsilon(1e-12));

  CHECK_THROWS(contrastive_loss(m, {&m0}, {0}));
  CHECK_THROWS(contrastive_loss(m, {&m0, &m1}, {1, 1}));
}

TEST_CASE("contrastive_loss gradients match finite differences") {
  ClapModel m = ClapModel::init(micro_config(), 8);
  m.set_trainable_for_contrastive();
  MelSpec m0 = random_mel(8, 12, 20), m1 = random_mel(8, 12, 21),
          m2 = random_mel(8, 12, 22), m3 = random_mel(8, 12, 23);
  std::vector<const MelSpec*> batch = {&m0, &m1, &m2, &m3};
  std::vector<int> ids = {0, 1, 2, 1};
  auto eval = [&] { return contrastive_loss(m, batch, ids, false); };
  auto eval_grad = [&] { return contrastive_loss(m, batch, ids, true); };
  double err = grad_check(m.store(), eval, eval_grad);
  CHECK(err <= 1e-3);
  CHECK(err < 1e-6);  // double precision should do far better
}

TEST_CASE("training reduces loss, zero epochs is identity, runs reproduce") {
  ClapModelConfig cfg = micro_config();
  std::vector<MelSpec> mels;
  std::vector<int> ids;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 6; ++i) {
      // Class-dependent offset makes the toy problem learnable.
      MelSpec s = random_mel(8, 16, static_cast<uint64_t>(100 + 10 * c + i));
      for (double& v : s.values.v) v += 2.5 * c;
      mels.push_back(std::move(s));
      ids.push_back(c);
    }

  ClapModel m0 = ClapModel::init(cfg, 9);
  uint64_t init_hash = m0.store().value_hash();
  ClapTrainConfig tc;
  tc.epochs = 0;
  auto logs0 = train_clap(m0, mels, ids, tc);
  CHECK(logs0.empty());
  CHECK(m0.store().value_hash() == init_hash);

  tc.epochs = 8;
  tc.batch = 6;
  tc.lr = 3e-3;
  tc.seed = 17;
  ClapModel m1 = ClapModel::init(cfg, 9);
  auto logs = train_clap(m1, mels, ids, tc);
  REQUIRE(logs.size() == 8);
  CHECK(logs.back().loss < logs.front().loss);

  ClapModel m2 = ClapModel::init(cfg, 9);
  train_clap(m2, mels, ids, tc);
  CHECK(m1.store().value_hash() == m2.store().value_hash());

  // Trained retrieval on this toy corpus should be solid.
  CHECK(class_retrieval_accuracy(m1, mels, ids) >= 0.9);

  std::vector<int> single(ids.size(), 0);
  ClapModel m3 = ClapModel::init(cfg, 9);
  CHECK_THROWS(train_clap(m3, mels, single, tc));
}

TEST_CASE("contrastive training keeps the tuning layer frozen") {
  ClapModel m = ClapModel::init(micro_config(), 31);
  std::vector<MelSpec> mels;
  std::vector<int> ids;
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 4; ++i) {
      MelSpec s = random_mel(8, 16, static_cast<uint64_t>(300 + 10 * c + i));
      for (double& v : s.values.v) v += 3.0 * c;
      mels.push_back(std::move(s));
      ids.push_back(c);
    }
  Tensor tw_before = m.store().at("tuning.w").value;
  ClapTrainConfig tc;
  tc.epochs = 3;
  tc.batch = 4;
  train_clap(m, mels, ids, tc);
  CHECK(max_abs_diff(tw_before, m.store().at("tuning.w").value) == 0.0);
}

}  // TEST_SUITE
