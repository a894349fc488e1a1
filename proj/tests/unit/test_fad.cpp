// Copyright (c) 2026 The foley-synth Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include "foley/dataset.hpp"
#include "foley/fad.hpp"
#include "test_util.hpp"

using namespace foley;
using test::random_tensor;
namespace fs = std::filesystem;

namespace {

EmbeddingStats stats_1d(double mean, double var, double shrink = 0.0) {
  EmbeddingStats s;
  s.mean = Tensor::from({1}, {mean});
  s.cov = Tensor::from({1, 1}, {var});
  s.count = 2;
  s.shrinkage = shrink;
  return s;
}

ClapModel tiny_clap(uint64_t seed) {
  ClapModelConfig c;
  c.embed_dim = 8;
  c.label_embed_dim = 4;
  c.channels = {4, 8};
  c.mel_bins = 8;
  c.labels = {"rain", "keyboard"};
  return ClapModel::init(c, seed);
}

MelConfig tiny_mel() {
  MelConfig c;
  c.window_length = 64;
  c.hop = 50;
  c.mel_bins = 8;
  c.fmax = 8000.0;
  return c;
}

Waveform noise_wave(int samples, uint64_t seed) {
  Rng rng(seed);
  Waveform w;
  w.samples.resize(static_cast<size_t>(samples));
  for (auto& s : w.samples) s = rng.uniform(-0.5, 0.5);
  return w;
}

}  // namespace

TEST_SUITE("fad") {

TEST_CASE("fit_stats hand arithmetic and the loop oracle") {
  std::vector<Tensor> two = {Tensor::from({2}, {0.0, 0.0}),
                             Tensor::from({2}, {2.0, 2.0})};
  EmbeddingStats s = fit_stats(two, 1e-6);
  CHECK(s.mean[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(s.mean[1] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(s.cov.at2(0, 0) == doctest::Approx(2.0 + 1e-6).epsilon(1e-12));
  CHECK(s.cov.at2(0, 1) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(s.cov.at2(1, 0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(s.cov.at2(1, 1) == doctest::Approx(2.0 + 1e-6).epsilon(1e-12));
  CHECK(s.count == 2);

  std::vector<Tensor> same(5, Tensor::from({3}, {0.4, -0.2, 0.9}));
  EmbeddingStats sd = fit_stats(same, 1e-6);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(sd.cov.at2(i, j) == doctest::Approx(i == j ? 1e-6 : 0.0).epsilon(1e-15));

  // Random 100 x 8 against a scalar-loop oracle.
  Rng rng(3);
  std::vector<Tensor> embs;
  for (int i = 0; i < 100; ++i) embs.push_back(random_tensor({8}, rng));
  EmbeddingStats sr = fit_stats(embs, 0.0);
  for (int i = 0; i < 8; ++i) {
    double mu = 0.0;
    for (const auto& e : embs) mu += e[i];
    mu /= 100.0;
    CHECK(sr.mean[i] == doctest::Approx(mu).epsilon(1e-10));
    for (int j = 0; j < 8; ++j) {
      double c = 0.0;
      for (const auto& e : embs) c += (e[i] - sr.mean[i]) * (e[j] - sr.mean[j]);
      c /= 99.0;
      CHECK(sr.cov.at2(i, j) == doctest::Approx(c).epsilon(1e-10));
    }
  }

  // Permutation invariance.
  std::vector<Tensor> shuffled = embs;
  std::reverse(shuffled.begin(), shuffled.end());
  EmbeddingStats sp = fit_stats(shuffled, 0.0);
  CHECK(max_abs_diff(sp.mean, sr.mean) < 1e-12);
  CHECK(max_abs_diff(sp.cov, sr.cov) < 1e-12);

  CHECK_THROWS(fit_stats({Tensor::from({2}, {1.0, 2.0})}));
}

TEST_CASE("frechet_distance analytic cases") {
  // Identical stats -> 0.
  Rng rng(5);
  std::vector<Tensor> embs;
  for (int i = 0; i < 40; ++i) embs.push_back(random_tensor({6}, rng));
  EmbeddingStats a = fit_stats(embs, 1e-6);
  CHECK(frechet_distance(a, a) <= 1e-8);

  // Equal covariance: distance is exactly the squared mean gap.
  EmbeddingStats b = a;
  for (int d = 0; d < 6; ++d) b.mean[d] += 0.5;
  CHECK(frechet_distance(a, b) == doctest::Approx(6 * 0.25).epsilon(1e-8));

  // 1-D: (0,1) vs (3,4) -> 9 + (1-2)^2 = 10.
  CHECK(frechet_distance(stats_1d(0.0, 1.0), stats_1d(3.0, 4.0)) ==
        doctest::Approx(10.0).epsilon(1e-10));

  // Commuting diagonal case against the closed form.
  int D = 5;
  EmbeddingStats da, db;
  da.mean = Tensor({D});
  db.mean = Tensor({D});
  da.cov = Tensor({D, D});
  db.cov = Tensor({D, D});
  da.count = db.count = 10;
  Rng rng2(6);
  double closed = 0.0;
  for (int d = 0; d < D; ++d) {
    da.mean[d] = rng2.uniform(-1.0, 1.0);
    db.mean[d] = rng2.uniform(-1.0, 1.0);
    double la = rng2.uniform(0.1, 2.0), lb = rng2.uniform(0.1, 2.0);
    da.cov.at2(d, d) = la;
    db.cov.at2(d, d) = lb;
    double dm = da.mean[d] - db.mean[d];
    closed += dm * dm + (std::sqrt(la) - std::sqrt(lb)) * (std::sqrt(la) - std::sqrt(lb));
  }
  CHECK(frechet_distance(da, db) == doctest::Approx(closed).epsilon(1e-8));

  // Symmetry.
  std::vector<Tensor> embs2;
  for (int i = 0; i < 40; ++i) embs2.push_back(random_tensor({6}, rng, 1.4));
  EmbeddingStats c = fit_stats(embs2, 1e-6);
  CHECK(std::fabs(frechet_distance(a, c) - frechet_distance(c, a)) < 1e-8);

  // Errors.
  CHECK_THROWS(frechet_distance(a, stats_1d(0.0, 1.0)));
  EmbeddingStats bad = a;
  bad.mean[0] = std::nan("");
  CHECK_THROWS(frechet_distance(bad, a));
}

TEST_CASE("shrinkage perturbs the distance by at most ~D*eps") {
  Rng rng(7);
  std::vector<Tensor> e1, e2;
  for (int i = 0; i < 30; ++i) {
    e1.push_back(random_tensor({6}, rng));
    e2.push_back(random_tensor({6}, rng, 1.3));
  }
  double eps = 1e-4;
  double base = frechet_distance(fit_stats(e1, 0.0), fit_stats(e2, 0.0));
  double shrunk = frechet_distance(fit_stats(e1, eps), fit_stats(e2, eps));
  CHECK(std::fabs(base - shrunk) <= 10.0 * 6 * eps);
}

TEST_CASE("embed_set preserves count, duplicates and order") {
  ClapModel clap = tiny_clap(8);
  MelConfig mc = tiny_mel();
  std::vector<Waveform> waves;
  for (int i = 0; i < 4; ++i) waves.push_back(noise_wave(50 * 20, 100 + i));
  std::vector<Tensor> embs = embed_set(waves, clap, mc);
  CHECK(embs.size() == 4);

  std::vector<Waveform> dup = {waves[0], waves[0]};
  std::vector<Tensor> dup_embs = embed_set(dup, clap, mc);
  CHECK(max_abs_diff(dup_embs[0], dup_embs[1]) == 0.0);

  std::vector<Waveform> perm = {waves[2], waves[0], waves[3], waves[1]};
  std::vector<Tensor> perm_embs = embed_set(perm, clap, mc);
  CHECK(max_abs_diff(perm_embs[1], embs[0]) == 0.0);
  CHECK(max_abs_diff(perm_embs[0], embs[2]) == 0.0);
  CHECK_THROWS(embed_set({}, clap, mc));
}

TEST_CASE("stats files round-trip bit-exactly") {
  Rng rng(9);
  std::vector<Tensor> embs;
  for (int i = 0; i < 12; ++i) embs.push_back(random_tensor({5}, rng));
  EmbeddingStats s = fit_stats(embs, 1e-6);
  fs::path dir = fs::temp_directory_path() / "foley_fad_tests";
  fs::create_directories(dir);
  std::string path = (dir / "ref.stats.bin").string();
  save_stats(path, s);
  EmbeddingStats r = load_stats(path);
  CHECK(r.count == s.count);
  CHECK(r.shrinkage == s.shrinkage);
  CHECK(r.mean.v == s.mean.v);
  CHECK(r.cov.v == s.cov.v);
  CHECK_THROWS(load_stats((dir / "missing.bin").string()));
}

TEST_CASE("evaluate: generated set equal to the reference scores zero") {
  ClapModel clap = tiny_clap(10);
  MelConfig mc = tiny_mel();
  std::vector<std::string> labels = {"rain", "keyboard"};
  fs::path root = fs::temp_directory_path() / "foley_fad_eval";
  fs::remove_all(root);
  fs::path gen = root / "gen";
  fs::path refs = root / "refs";
  fs::create_directories(refs);
  for (const auto& label : labels) {
    fs::create_directories(gen / label);
    std::vector<Waveform> waves;
    for (int i = 0; i < 5; ++i) {
      Waveform w = noise_wave(50 * 16, fnv1a64(label) + static_cast<uint64_t>(i));
      waves.push_back(w);
      char name[16];
      std::snprintf(name, sizeof(name), "%04d.wav", i);
      save_wav((gen / label / name).string(), w);
    }
    // Reference stats from the same clips, after the 16-bit write/read.
    std::vector<Waveform> reread;
    for (int i = 0; i < 5; ++i) {
      char name[16];
      std::snprintf(name, sizeof(name), "%04d.wav", i);
      reread.push_back(load_wav((gen / label / name).string(), mc.sample_rate));
    }
    save_stats((refs / (label + ".stats.bin")).string(),
               fit_stats(embed_set(reread, clap, mc), 1e-6));
  }
  EvalReport rep = evaluate(gen.string(), refs.string(), clap, labels, mc, 1e-6);
  REQUIRE(rep.rows.size() == 2);
  for (const auto& row : rep.rows) {
    CHECK(row.fad <= 1e-8);
    CHECK(row.count == 5);
    CHECK(row.mean_similarity >= -1.0);
    CHECK(row.mean_similarity <= 1.0);
  }
  CHECK(rep.average_fad <= 1e-8);
  std::string table = format_eval_table(rep);
  CHECK(table.find("Average") != std::string::npos);
  CHECK(table.find("Std") != std::string::npos);
  CHECK(table.find("rain") != std::string::npos);

  CHECK_THROWS(evaluate((root / "nope").string(), refs.string(), clap, labels, mc));
}

}  // TEST_SUITE
