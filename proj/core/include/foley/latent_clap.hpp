// Copyright (c) 2026 The foley-synth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "foley/clap.hpp"
#include "foley/nn.hpp"
#include "foley/vae.hpp"

namespace foley {

struct LatentClapModelConfig {
  std::vector<int> channels = {32, 64, 128};  // conv widths, stride 2 each
  int latent_channels = 4;
  int embed_dim = 64;
};

/// Encoder from VAE latents to the CLAP embedding space. Distilled from the
/// frozen audio branch so that an embedding-matching loss can be evaluated
/// on diffusion outputs without decoding to audio.
class LatentClapModel {
 public:
  static LatentClapModel init(const LatentClapModelConfig& cfg, uint64_t seed);

  const LatentClapModelConfig& config() const { return cfg_; }
  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }

  /// z_batch [N,C,H,W] -> unit-norm embeddings [N,D].
  Graph::Id forward(Graph& g, Graph::Id z_batch);

  Tensor encode(const Latent& z);

  void freeze() { store_.set_trainable(false); }

 private:
  LatentClapModelConfig cfg_;
  ParamStore store_;
};

/// Mean squared error over embedding components; zero iff equal.
double distill_loss(const Tensor& e_audio, const Tensor& e_latent);

struct LatentClapTrainConfig {
  int epochs = 25;
  int batch = 16;
  double lr = 1e-3;
  uint64_t seed = 7;
};

/// Distills the latent encoder against frozen CLAP-audio targets: for each
/// clip, target = encode_audio(clap, mel) and input = the VAE posterior
/// mean. Neither the CLAP nor the VAE parameters change.
std::vector<TrainEpochLog> train_latent_clap(LatentClapModel& model,
                                             const std::vector<Latent>& latents,
                                             const std::vector<Tensor>& audio_targets,
                                             const LatentClapTrainConfig& cfg);

/// Mean cosine similarity between targets and the model's embeddings.
double mean_embedding_cosine(LatentClapModel& model, const std::vector<Latent>& latents,
                             const std::vector<Tensor>& audio_targets);

}  // namespace foley
