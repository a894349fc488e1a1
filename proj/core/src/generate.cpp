// Copyright (c) 2026 The foley-synth Authors
// SPDX-License-Identifier: Apache-2.0

#include "foley/generate.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <stdexcept>

#include "foley/dataset.hpp"

namespace foley {

double GenerationConfig::threshold_for(const std::string& label) const {
  auto it = thresholds.find(label);
  return it == thresholds.end() ? 0.2 : it->second;
}

namespace {

GeneratedClip render_one(GenerationModels& models, const Tensor& cond, uint64_t seed,
                         const GenerationConfig& cfg) {
  GeneratedClip clip;
  clip.latent = sample(models.ldm, cond, cfg.inference_steps, cfg.g, seed);
  MelSpec mel = models.vae.decode(clip.latent, cfg.mel);
  clip.audio = griffin_lim(mel, cfg.griffin_lim_iters, seed).audio;
  return clip;
}

std::vector<double> clap_similarities(const std::vector<GeneratedClip>& clips,
                                      const std::string& label, ClapModel& clap,
                                      const MelConfig& mel_cfg, bool use_tuning) {
  std::vector<Waveform> waves;
  waves.reserve(clips.size());
  for (const auto& c : clips) waves.push_back(c.audio);
  PostFilterResult r = post_filter(waves, label, clap, 2.0, mel_cfg, use_tuning);
  return r.similarities;
}

}  // namespace

std::vector<GeneratedClip> generate_audio(GenerationModels models,
                                          const std::string& label, int count,
                                          const GenerationConfig& cfg) {
  if (count < 0) throw std::invalid_argument("generate_audio: negative count");
  const auto& labels = models.clap.config().labels;
  Tensor cond = models.clap.encode_text(prompt_of(label, labels), cfg.use_tuning);
  std::vector<GeneratedClip> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i)
    out.push_back(render_one(models, cond, cfg.seed + static_cast<uint64_t>(i), cfg));
  return out;
}

std::vector<size_t> select_by_threshold(const std::vector<double>& similarities,
                                        double threshold) {
  std::vector<size_t> kept;
  for (size_t i = 0; i < similarities.size(); ++i)
    if (similarities[i] >= threshold) kept.push_back(i);
  return kept;
}

PostFilterResult post_filter(const std::vector<Waveform>& candidates,
                             const std::string& label, ClapModel& clap,
                             double threshold, const MelConfig& mel_cfg,
                             bool use_tuning) {
  const auto& labels = clap.config().labels;
  Tensor text = clap.encode_text(prompt_of(label, labels), use_tuning);
  PostFilterResult res;
  res.similarities.reserve(candidates.size());
  for (size_t i = 0; i < candidates.size(); ++i) {
    Waveform w = candidates[i];
    if (w.length() % mel_cfg.hop != 0) {
      long long target = (w.length() / mel_cfg.hop + 1) * mel_cfg.hop;
      w = extend_clip(w, target);
    }
    Tensor audio = clap.encode_audio(mel_spectrogram(w, mel_cfg));
    res.similarities.push_back(cosine_similarity(audio, text));
  }
  res.kept_indices = select_by_threshold(res.similarities, threshold);
  return res;
}

GenerateFilteredResult generate_filtered(GenerationModels models,
                                         const std::string& label, int count,
                                         const GenerationConfig& cfg,
                                         const SimilarityFn& similarity_fn) {
  GenerateFilteredResult result;
  result.report.requested = count;
  if (count <= 0) {
    result.report.acceptance_rate = 0.0;
    return result;
  }
  auto t0 = std::chrono::steady_clock::now();
  const auto& labels = models.clap.config().labels;
  Tensor cond = models.clap.encode_text(prompt_of(label, labels), cfg.use_tuning);
  double threshold = cfg.threshold_for(label);
  long long cap = static_cast<long long>(count * cfg.max_attempt_factor);

  std::vector<GeneratedClip> accepted;
  std::vector<GeneratedClip> rejected;
  long long generated = 0;
  while (static_cast<int>(accepted.size()) < count && generated < cap) {
    int round = static_cast<int>(std::min<long long>(count, cap - generated));
    std::vector<GeneratedClip> batch;
    batch.reserve(static_cast<size_t>(round));
    for (int i = 0; i < round; ++i)
      batch.push_back(render_one(models, cond,
                                 cfg.seed + static_cast<uint64_t>(generated + i), cfg));
    std::vector<double> sims =
        similarity_fn ? similarity_fn(batch)
                      : clap_similarities(batch, label, models.clap, cfg.mel,
                                          cfg.use_tuning);
    if (sims.size() != batch.size())
      throw std::logic_error("generate_filtered: similarity count mismatch");
    for (size_t i = 0; i < batch.size(); ++i) {
      batch[i].similarity = sims[i];
      result.report.per_clip_similarity.push_back(sims[i]);
      if (sims[i] >= threshold)
        accepted.push_back(std::move(batch[i]));
      else
        rejected.push_back(std::move(batch[i]));
    }
    generated += round;
  }
  result.report.generated_total = generated;
  result.report.accepted = static_cast<long long>(accepted.size());
  result.report.acceptance_rate =
      generated > 0 ? static_cast<double>(result.report.accepted) /
                          static_cast<double>(generated)
                    : 0.0;

  if (static_cast<int>(accepted.size()) >= count) {
    accepted.resize(static_cast<size_t>(count));
    result.clips = std::move(accepted);
  } else {
    // Under quota: top up with the best rejected clips by similarity.
    result.report.under_quota = true;
    std::vector<size_t> order(rejected.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      return rejected[a].similarity > rejected[b].similarity;
    });
    result.clips = std::move(accepted);
    for (size_t k = 0; k < order.size() && static_cast<int>(result.clips.size()) < count;
         ++k)
      result.clips.push_back(std::move(rejected[order[k]]));
  }
  result.report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace foley
