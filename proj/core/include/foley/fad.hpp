// Copyright (c) 2026 The foley-synth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "foley/clap.hpp"
#include "foley/dsp.hpp"

namespace foley {

struct EmbeddingStats {
  Tensor mean;  // [D]
  Tensor cov;   // [D,D], symmetric
  long long count = 0;
  double shrinkage = 1e-6;
};

/// One embedding per waveform (mel + frozen audio branch), order preserved.
std::vector<Tensor> embed_set(const std::vector<Waveform>& waveforms,
                              ClapModel& embedder, const MelConfig& mel_cfg);

/// Sample mean and unbiased covariance plus shrinkage * I.
EmbeddingStats fit_stats(const std::vector<Tensor>& embeddings,
                         double shrinkage = 1e-6);

/// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2}), clamped at zero.
/// The matrix square root uses the eigendecomposition of the symmetrized
/// product Sa^{1/2} Sb Sa^{1/2} with negative eigenvalues clamped.
double frechet_distance(const EmbeddingStats& a, const EmbeddingStats& b);

/// Stats file: int64 dim, int64 count, f64 shrinkage, then mu and row-major
/// cov as little-endian 64-bit floats.
void save_stats(const std::string& path, const EmbeddingStats& stats);
EmbeddingStats load_stats(const std::string& path);

struct EvalClassRow {
  std::string label;
  double fad = 0.0;
  double mean_similarity = 0.0;
  int count = 0;
};

struct EvalReport {
  std::vector<EvalClassRow> rows;
  double average_fad = 0.0;
  double std_fad = 0.0;
};

/// Per-class FAD of <gen_dir>/<label>/*.wav against per-class reference
/// stats (<ref_stats_dir>/<label>.stats.bin), plus mean audio-text cosine
/// similarity; summary row across classes.
EvalReport evaluate(const std::string& gen_dir, const std::string& ref_stats_dir,
                    ClapModel& embedder, const std::vector<std::string>& labels,
                    const MelConfig& mel_cfg, double shrinkage = 1e-6);

std::string format_eval_table(const EvalReport& report);

}  // namespace foley
