// Copyright (c) 2026 The foley-synth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "foley/dsp.hpp"
#include "foley/nn.hpp"

namespace foley {

struct ClapModelConfig {
  int embed_dim = 64;
  int label_embed_dim = 32;
  std::vector<int> channels = {8, 16, 32, 64};  // audio conv widths, stride 2 each
  int mel_bins = 32;
  double temperature_init = 0.07;
  bool tuning_enabled = false;
  std::vector<std::string> labels;
};

/// Contrastive text-audio embedding model. The text branch is a label
/// embedding table plus projection (prompts are templated from a closed
/// label set); the audio branch is a strided conv net over the Mel grid
/// with mean+max global pooling. Both emit L2-normalized vectors of the
/// same dimension. A tuning layer (identity-initialized affine map after
/// the text branch) is always allocated and participates only when
/// requested; it stays frozen during contrastive training.
class ClapModel {
 public:
  static ClapModel init(const ClapModelConfig& cfg, uint64_t seed);

  const ClapModelConfig& config() const { return cfg_; }
  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }

  /// Batched graph builders used by training and by downstream stages.
  Graph::Id text_forward(Graph& g, const std::vector<int>& label_ids,
                         bool use_tuning);
  Graph::Id audio_forward(Graph& g, Graph::Id mel_batch);  // [N,1,F,T] -> [N,D]

  /// One prompt -> unit-norm embedding. Throws when the prompt does not
  /// match "This is a sound of <label>" for a known label.
  Tensor encode_text(const std::string& prompt, bool use_tuning = false);
  Tensor encode_audio(const MelSpec& m);

  double temperature() const;
  void set_trainable_for_contrastive();  // everything except the tuning layer
  void freeze() { store_.set_trainable(false); }

 private:
  ClapModelConfig cfg_;
  ParamStore store_;
};

double cosine_similarity(const Tensor& a, const Tensor& b);

/// Symmetric InfoNCE for a precomputed [B,B] logit matrix (matched pairs on
/// the diagonal): the average of row-wise and column-wise cross-entropies.
double info_nce_from_logits(const Tensor& logits);

/// Contrastive loss of a batch of (mel, label-id) pairs at the model's
/// current temperature. With accumulate_grads, parameter gradients are added
/// into the store.
double contrastive_loss(ClapModel& model,
                        const std::vector<const MelSpec*>& mels,
                        const std::vector<int>& label_ids,
                        bool accumulate_grads = false);

struct ClapTrainConfig {
  int epochs = 18;
  int batch = 16;
  double lr = 1e-3;
  uint64_t seed = 7;
};

/// Minimizes the contrastive loss over the cached corpus. Returns one log
/// entry per epoch (mean loss).
std::vector<TrainEpochLog> train_clap(ClapModel& model,
                                      const std::vector<MelSpec>& mels,
                                      const std::vector<int>& label_ids,
                                      const ClapTrainConfig& cfg);

/// Fraction of clips whose audio embedding is nearest (by cosine) to their
/// own class text embedding.
double class_retrieval_accuracy(ClapModel& model, const std::vector<MelSpec>& mels,
                                const std::vector<int>& label_ids);

}  // namespace foley
