// Copyright (c) 2026 The foley-synth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "foley/dsp.hpp"
#include "foley/nn.hpp"

namespace foley {

/// A latent array of shape C x (F/r) x (T/r), optionally tagged with the
/// diffusion step that produced it.
struct Latent {
  Tensor values;  // [C, H, W]
  std::optional<int> step;
};

struct VaeModelConfig {
  int latent_channels = 4;
  int ratio = 4;                       // power of two; downsamples = log2(ratio)
  std::vector<int> channels = {8, 16};  // encoder widths, one per downsample
  int mel_bins = 32;
  double kl_weight = 1e-4;
};

/// Convolutional VAE over Mel grids. Inputs are standardized with corpus
/// statistics (mel_mean/mel_std) and user-facing latents are divided by a
/// corpus-estimated latent_std so the diffusion model sees unit-scale data;
/// both live in the checkpoint metadata.
class VaeModel {
 public:
  static VaeModel init(const VaeModelConfig& cfg, uint64_t seed);

  const VaeModelConfig& config() const { return cfg_; }
  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }

  struct EncoderOut {
    Graph::Id mu;
    Graph::Id logvar;
  };
  /// mel_batch [N,1,F,T] (already standardized) -> mu/logvar [N,C,F/r,T/r].
  EncoderOut encode_forward(Graph& g, Graph::Id mel_batch);
  /// z [N,C,F/r,T/r] (unscaled) -> standardized mel [N,1,F,T].
  Graph::Id decode_forward(Graph& g, Graph::Id z);

  enum class EncodeMode { kMean, kSample };
  Latent encode(const MelSpec& m, EncodeMode mode, uint64_t seed = 0);
  MelSpec decode(const Latent& z, const MelConfig& mel_cfg);

  Tensor standardize(const MelSpec& m) const;  // [1,1,F,T]

  std::vector<int> latent_dims(int frames) const;

  double mel_mean = 0.0;
  double mel_std = 1.0;
  double latent_std = 1.0;

 private:
  VaeModelConfig cfg_;
  ParamStore store_;
  int downsamples_ = 2;
};

/// Elementwise KL(q || N(0,1)) summed-mean: mean over elements of
/// 0.5*(mu^2 + exp(logvar) - 1 - logvar).
Graph::Id kl_divergence_mean(Graph& g, Graph::Id mu, Graph::Id logvar);

struct VaeTrainConfig {
  int epochs = 12;
  int batch = 8;
  double lr = 1e-3;
  uint64_t seed = 7;
};

struct VaeLossParts {
  double total = 0.0;
  double recon = 0.0;
  double kl = 0.0;
};

/// ELBO-style loss for one batch (reconstruction MSE + kl_weight * KL),
/// optionally accumulating gradients.
VaeLossParts vae_loss(VaeModel& model, const Tensor& mel_batch, Rng& noise_rng,
                      bool accumulate_grads);

/// Trains the VAE on cached Mels; sets mel/latent statistics on the model.
std::vector<TrainEpochLog> train_vae(VaeModel& model, const std::vector<MelSpec>& mels,
                                     const VaeTrainConfig& cfg);

}  // namespace foley
