// Copyright (c) 2026 The foley-synth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "foley/dsp.hpp"

namespace foley {

/// The seven default sound classes.
const std::vector<std::string>& default_class_labels();

struct ManifestEntry {
  std::string path;  // relative to root
  std::string label;
  double duration_s = 0.0;
};

struct Manifest {
  std::string root;
  std::vector<ManifestEntry> entries;

  std::string resolve(const ManifestEntry& e) const { return root + "/" + e.path; }
};

/// "dog_bark" -> "This is a sound of dog bark".
std::string prompt_of(const std::string& label,
                      const std::vector<std::string>& labels);

/// Inverse of prompt_of; empty when the prompt does not match a known label.
std::optional<std::string> label_from_prompt(const std::string& prompt,
                                             const std::vector<std::string>& labels);

/// Deterministic parametric clip for a class. Each label maps to a distinct
/// acoustic family; the seed jitters rates, frequencies and envelopes.
Waveform synthesize_class_clip(const std::string& label, uint64_t seed,
                               double duration_s, int sample_rate = 16000);

/// Writes per_class clips per class as WAV under out_dir/<label>/<index>.wav
/// plus manifest.jsonl, and returns the manifest.
Manifest build_corpus(const std::vector<std::string>& classes, int per_class,
                      uint64_t seed, const std::string& out_dir,
                      double clip_seconds = 4.0, int sample_rate = 16000);

Manifest load_manifest(const std::string& path);
void save_manifest(const Manifest& m, const std::string& path);
/// Checks paths exist, labels belong to the class set, and paths are unique.
void validate_manifest(const Manifest& m, const std::vector<std::string>& classes);

int label_index(const std::string& label, const std::vector<std::string>& labels);

}  // namespace foley
