// Copyright (c) 2026 The foley-synth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "foley/tensor.hpp"

namespace foley {

/// Mono audio in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;

  long long length() const { return static_cast<long long>(samples.size()); }
  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

struct MelConfig {
  int sample_rate = 16000;
  int window_length = 1024;
  int hop = 160;
  int mel_bins = 64;
  double fmin = 0.0;
  double fmax = 8000.0;
  double log_floor = 1e-5;

  bool operator==(const MelConfig&) const = default;
};

/// Log-power Mel grid, [mel_bins x frames].
struct MelSpec {
  Tensor values;
  MelConfig config;

  int bins() const { return values.dims[0]; }
  int frames() const { return values.dims[1]; }
};

// WAV I/O: RIFF PCM. Reads 16-bit PCM (any channel count, averaged to mono,
// linearly resampled when the header rate differs from target_rate);
// writes 16-bit signed little-endian mono.
Waveform load_wav(const std::string& path, int target_rate = 16000);
void save_wav(const std::string& path, const Waveform& w);

Waveform resample_linear(const Waveform& w, int target_rate);

/// Tiles the clip end-to-end and truncates to exactly target_samples.
Waveform extend_clip(const Waveform& w, long long target_samples);

/// Reflection-padded STFT -> HTK-style Mel filterbank -> log(max(p, floor)).
/// The waveform length must be a multiple of cfg.hop; frames = len / hop.
MelSpec mel_spectrogram(const Waveform& w, const MelConfig& cfg);

struct GriffinLimResult {
  Waveform audio;
  /// Mel-domain re-analysis relative error after each iteration
  /// (best-so-far, hence non-increasing).
  std::vector<double> error_trace;
};

/// Phase reconstruction from a Mel grid: filterbank pseudo-inverse for the
/// magnitude estimate, then seeded random-phase Griffin-Lim. Keeps the
/// best estimate seen under Mel re-analysis error.
GriffinLimResult griffin_lim(const MelSpec& m, int iterations, uint64_t seed);

/// Mel filterbank center frequencies in Hz (one per bin).
std::vector<double> mel_filter_centers(const MelConfig& cfg);

/// Relative L2 distance between two equally-shaped Mel grids.
double mel_relative_error(const MelSpec& a, const MelSpec& b);

}  // namespace foley
