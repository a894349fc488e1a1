// Copyright (c) 2026 The foley-synth Authors
// SPDX-License-Identifier: Apache-2.0

#include "foley/fad.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <Eigen/Dense>

#include "foley/dataset.hpp"

namespace fs = std::filesystem;

namespace foley {

std::vector<Tensor> embed_set(const std::vector<Waveform>& waveforms,
                              ClapModel& embedder, const MelConfig& mel_cfg) {
  if (waveforms.empty()) throw std::invalid_argument("embed_set: empty input");
  std::vector<Tensor> out;
  out.reserve(waveforms.size());
  for (const auto& w0 : waveforms) {
    Waveform w = w0;
    if (w.length() % mel_cfg.hop != 0)
      w = extend_clip(w, (w.length() / mel_cfg.hop + 1) * mel_cfg.hop);
    out.push_back(embedder.encode_audio(mel_spectrogram(w, mel_cfg)));
  }
  return out;
}

EmbeddingStats fit_stats(const std::vector<Tensor>& embeddings, double shrinkage) {
  if (embeddings.size() < 2)
    throw std::invalid_argument("fit_stats: need at least 2 embeddings");
  int D = embeddings[0].dims[0];
  long long n = static_cast<long long>(embeddings.size());
  EmbeddingStats s;
  s.count = n;
  s.shrinkage = shrinkage;
  s.mean = Tensor({D});
  s.cov = Tensor({D, D});
  for (const auto& e : embeddings) {
    if (e.dims != embeddings[0].dims)
      throw std::invalid_argument("fit_stats: mixed embedding dimensions");
    for (int d = 0; d < D; ++d) s.mean[d] += e[d];
  }
  for (int d = 0; d < D; ++d) s.mean[d] /= static_cast<double>(n);
  for (const auto& e : embeddings)
    for (int i = 0; i < D; ++i) {
      double di = e[i] - s.mean[i];
      for (int j = 0; j < D; ++j) s.cov.at2(i, j) += di * (e[j] - s.mean[j]);
    }
  double inv = 1.0 / static_cast<double>(n - 1);
  for (auto& x : s.cov.v) x *= inv;
  for (int d = 0; d < D; ++d) s.cov.at2(d, d) += shrinkage;
  return s;
}

double frechet_distance(const EmbeddingStats& a, const EmbeddingStats& b) {
  if (a.mean.dims != b.mean.dims)
    throw std::invalid_argument("frechet_distance: dimension mismatch");
  if (!a.mean.all_finite() || !a.cov.all_finite() || !b.mean.all_finite() ||
      !b.cov.all_finite())
    throw std::invalid_argument("frechet_distance: non-finite stats");
  int D = a.mean.dims[0];
  Eigen::MatrixXd Sa(D, D), Sb(D, D);
  for (int i = 0; i < D; ++i)
    for (int j = 0; j < D; ++j) {
      Sa(i, j) = 0.5 * (a.cov.at2(i, j) + a.cov.at2(j, i));
      Sb(i, j) = 0.5 * (b.cov.at2(i, j) + b.cov.at2(j, i));
    }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esa(Sa);
  Eigen::VectorXd la = esa.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  Eigen::MatrixXd sqrt_a =
      esa.eigenvectors() * la.asDiagonal() * esa.eigenvectors().transpose();
  Eigen::MatrixXd m = sqrt_a * Sb * sqrt_a;
  m = 0.5 * (m + m.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esm(m);
  double tr_sqrt = esm.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  double mu2 = 0.0;
  for (int d = 0; d < D; ++d) {
    double diff = a.mean[d] - b.mean[d];
    mu2 += diff * diff;
  }
  double fad = mu2 + Sa.trace() + Sb.trace() - 2.0 * tr_sqrt;
  return fad < 0.0 ? 0.0 : fad;
}

void save_stats(const std::string& path, const EmbeddingStats& stats) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_stats: cannot open " + path);
  auto put64 = [&](uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    f.write(reinterpret_cast<char*>(b), 8);
  };
  auto putf64 = [&](double d) {
    uint64_t v;
    std::memcpy(&v, &d, 8);
    put64(v);
  };
  int D = stats.mean.dims[0];
  put64(static_cast<uint64_t>(D));
  put64(static_cast<uint64_t>(stats.count));
  putf64(stats.shrinkage);
  for (double d : stats.mean.v) putf64(d);
  for (double d : stats.cov.v) putf64(d);
  if (!f) throw std::runtime_error("save_stats: write failed: " + path);
}

EmbeddingStats load_stats(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_stats: cannot open " + path);
  auto get64 = [&]() {
    unsigned char b[8];
    f.read(reinterpret_cast<char*>(b), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
  };
  auto getf64 = [&]() {
    uint64_t v = get64();
    double d;
    std::memcpy(&d, &v, 8);
    return d;
  };
  EmbeddingStats s;
  int D = static_cast<int>(get64());
  s.count = static_cast<long long>(get64());
  s.shrinkage = getf64();
  if (!f || D <= 0) throw std::runtime_error("load_stats: malformed header in " + path);
  s.mean = Tensor({D});
  s.cov = Tensor({D, D});
  for (auto& d : s.mean.v) d = getf64();
  for (auto& d : s.cov.v) d = getf64();
  if (!f) throw std::runtime_error("load_stats: truncated stats in " + path);
  return s;
}

EvalReport evaluate(const std::string& gen_dir, const std::string& ref_stats_dir,
                    ClapModel& embedder, const std::vector<std::string>& labels,
                    const MelConfig& mel_cfg, double shrinkage) {
  EvalReport report;
  for (const auto& label : labels) {
    fs::path class_dir = fs::path(gen_dir) / label;
    if (!fs::is_directory(class_dir))
      throw std::runtime_error("evaluate: missing class directory " +
                               class_dir.string());
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(class_dir))
      if (e.path().extension() == ".wav") files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    if (files.size() < 2)
      throw std::runtime_error("evaluate: need at least 2 clips for " + label);
    std::vector<Waveform> waves;
    waves.reserve(files.size());
    for (const auto& p : files) waves.push_back(load_wav(p, mel_cfg.sample_rate));
    std::vector<Tensor> embs = embed_set(waves, embedder, mel_cfg);
    EmbeddingStats gen_stats = fit_stats(embs, shrinkage);
    EmbeddingStats ref =
        load_stats((fs::path(ref_stats_dir) / (label + ".stats.bin")).string());

    Tensor text = embedder.encode_text(prompt_of(label, labels));
    double sim = 0.0;
    for (const auto& e : embs) sim += cosine_similarity(e, text);

    EvalClassRow row;
    row.label = label;
    row.fad = frechet_distance(gen_stats, ref);
    row.mean_similarity = sim / static_cast<double>(embs.size());
    row.count = static_cast<int>(embs.size());
    report.rows.push_back(row);
  }
  double sum = 0.0;
  for (const auto& r : report.rows) sum += r.fad;
  report.average_fad = sum / static_cast<double>(report.rows.size());
  double var = 0.0;
  for (const auto& r : report.rows) {
    double d = r.fad - report.average_fad;
    var += d * d;
  }
  report.std_fad = report.rows.size() > 1
                       ? std::sqrt(var / static_cast<double>(report.rows.size() - 1))
                       : 0.0;
  return report;
}

std::string format_eval_table(const EvalReport& report) {
  char line[160];
  std::string out;
  std::snprintf(line, sizeof(line), "%-16s %10s %12s %8s\n", "class", "FAD",
                "similarity", "count");
  out += line;
  for (const auto& r : report.rows) {
    std::snprintf(line, sizeof(line), "%-16s %10.4f %12.4f %8d\n", r.label.c_str(),
                  r.fad, r.mean_similarity, r.count);
    out += line;
  }
  std::snprintf(line, sizeof(line), "%-16s %10.4f\n", "Average", report.average_fad);
  out += line;
  std::snprintf(line, sizeof(line), "%-16s %10.4f\n", "Std", report.std_fad);
  out += line;
  return out;
}

}  // namespace foley
