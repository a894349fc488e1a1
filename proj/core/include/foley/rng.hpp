// Copyright (c) 2026 The foley-synth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace foley {

/// Deterministic RNG. mt19937_64 output is pinned by the standard and the
/// uniform/normal transforms below are hand-rolled, so streams reproduce
/// bit-exactly across platforms for a given seed.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Inclusive integer range via rejection-free modulo of a wide draw.
  int uniform_int(int lo, int hi);

  /// Standard normal via Box-Muller; pairs are cached.
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// 64-bit FNV-1a over arbitrary bytes.
uint64_t fnv1a64(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ull);
uint64_t fnv1a64(std::string_view s, uint64_t seed = 0xcbf29ce484222325ull);

/// Derives an independent stream seed from (base, tag, index). Used so that
/// every consumer of randomness gets its own reproducible stream.
uint64_t mix_seed(uint64_t base, std::string_view tag, uint64_t index = 0);

}  // namespace foley
