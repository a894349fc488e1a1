// Copyright (c) 2026 The foley-synth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "foley/clap.hpp"
#include "foley/ldm.hpp"
#include "foley/vae.hpp"

namespace foley {

struct GenerationConfig {
  double g = 2.0;
  int inference_steps = 100;
  std::map<std::string, double> thresholds;
  double max_attempt_factor = 10.0;
  uint64_t seed = 0;
  int griffin_lim_iters = 32;
  bool use_tuning = false;
  MelConfig mel;

  double threshold_for(const std::string& label) const;
};

struct GenerationReport {
  long long requested = 0;
  long long generated_total = 0;
  long long accepted = 0;
  double acceptance_rate = 0.0;
  double wall_time_s = 0.0;
  std::vector<double> per_clip_similarity;
  bool under_quota = false;
};

struct GeneratedClip {
  Waveform audio;
  Latent latent;
  double similarity = 0.0;  // filled by filtering paths
};

struct GenerationModels {
  LdmModel& ldm;
  VaeModel& vae;
  ClapModel& clap;
};

/// Full pipeline for one class: sample latent (seed + i for clip i) ->
/// VAE decode -> Griffin-Lim. Deterministic given cfg.seed.
std::vector<GeneratedClip> generate_audio(GenerationModels models,
                                          const std::string& label, int count,
                                          const GenerationConfig& cfg);

struct PostFilterResult {
  std::vector<size_t> kept_indices;  // input order preserved
  std::vector<double> similarities;  // one per candidate
};

/// Keeps candidates whose audio-text CLAP cosine similarity reaches the
/// threshold.
PostFilterResult post_filter(const std::vector<Waveform>& candidates,
                             const std::string& label, ClapModel& clap,
                             double threshold, const MelConfig& mel_cfg,
                             bool use_tuning = false);

/// The selection rule behind post_filter: indices with sim >= threshold,
/// input order preserved.
std::vector<size_t> select_by_threshold(const std::vector<double>& similarities,
                                        double threshold);

/// Candidate scorer, injectable for tests; defaults to the CLAP similarity.
using SimilarityFn =
    std::function<std::vector<double>(const std::vector<GeneratedClip>&)>;

struct GenerateFilteredResult {
  std::vector<GeneratedClip> clips;  // exactly `count` when attainable
  GenerationReport report;
};

/// Generates in rounds of `count`, filtering each round, until the quota is
/// met or generated_total reaches count * max_attempt_factor. When the quota
/// cannot be met, returns the highest-similarity clips and flags the report.
GenerateFilteredResult generate_filtered(GenerationModels models,
                                         const std::string& label, int count,
                                         const GenerationConfig& cfg,
                                         const SimilarityFn& similarity_fn = {});

}  // namespace foley
