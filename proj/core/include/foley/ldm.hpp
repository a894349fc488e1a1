// Copyright (c) 2026 The foley-synth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <vector>

#include "foley/clap.hpp"
#include "foley/latent_clap.hpp"
#include "foley/nn.hpp"
#include "foley/vae.hpp"

namespace foley {

/// Forward-process tables: beta[1..N] and alpha_bar[0..N] with
/// alpha_bar[0] = 1 and alpha_bar[n] = prod_{k<=n} (1 - beta_k).
struct NoiseSchedule {
  int N = 0;
  std::vector<double> beta;
  std::vector<double> alpha_bar;
};

/// Linearly spaced betas.
NoiseSchedule make_schedule(int N, double beta_start, double beta_end);

struct LossConfig {
  double lambda = 0.0;
  double weight_base = 10.0;
  double weight_scale = 200.0;
  double cond_dropout_p = 0.1;
  bool force_aux = false;
};

/// w(n) = weight_base^(-n / weight_scale); 10^(-n/200) by default.
double step_weight(int n, const LossConfig& cfg);

/// s_n = sqrt(alpha_bar_n) s0 + sqrt(1 - alpha_bar_n) eps.
Latent q_sample(const Latent& s0, int n, const Tensor& eps, const NoiseSchedule& sched);

/// s0_hat = (s_n - sqrt(1 - alpha_bar_n) eps_hat) / sqrt(alpha_bar_n);
/// exact inverse of q_sample when eps_hat is the true noise.
Latent predict_s0(const Latent& s_n, int n, const Tensor& eps_hat,
                  const NoiseSchedule& sched);

/// Mean squared error over all elements.
double ddpm_loss(const Tensor& eps, const Tensor& eps_hat);

/// L = ddpm + lambda * lclap.
double total_loss(double ddpm, double lclap, const LossConfig& cfg);

/// eps_uncond + g * (eps_cond - eps_uncond).
Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, double g);

struct LdmModelConfig {
  int latent_channels = 4;
  int latent_height = 8;
  int latent_width = 64;
  int base_channels = 16;
  int time_dim = 32;
  int cond_dim = 64;
};

/// Epsilon-prediction network: a small U-Net-style conv net over latents,
/// conditioned on the text embedding and the step index through feature-wise
/// modulation, plus a learned null-condition embedding for the unconditional
/// branch.
class LdmModel {
 public:
  static LdmModel init(const LdmModelConfig& cfg, const NoiseSchedule& sched,
                       uint64_t seed);

  const LdmModelConfig& config() const { return cfg_; }
  const NoiseSchedule& schedule() const { return sched_; }
  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }

  /// Batched graph builder: s_batch [N,C,H,W], per-sample step indices,
  /// cond_rows [N,D] -> predicted noise [N,C,H,W].
  Graph::Id eps_forward(Graph& g, Graph::Id s_batch, const std::vector<int>& steps,
                        Graph::Id cond_rows);

  /// Single-latent prediction; cond == nullptr uses the null embedding.
  Tensor predict_eps(const Tensor& s, int n, const Tensor* cond);

  Tensor null_cond_value() const;
  Param& null_cond_param() { return store_.at("null_cond"); }

  void freeze() { store_.set_trainable(false); }

 private:
  LdmModelConfig cfg_;
  NoiseSchedule sched_;
  ParamStore store_;
};

struct SampleStats {
  long long cond_evals = 0;
  long long uncond_evals = 0;
};

using EpsFn = std::function<Tensor(const Tensor& s, int n, const Tensor* cond)>;

/// Deterministic DDIM (eta = 0) over `steps` evenly spaced schedule indices,
/// starting from seeded Gaussian noise; returns the final clean estimate.
/// Classifier-free guidance combines conditional and unconditional
/// predictions when g != 1; the unconditional branch is never evaluated at
/// g == 1.
Latent sample_with(const EpsFn& eps_fn, const NoiseSchedule& sched,
                   const std::vector<int>& latent_dims, const Tensor* cond, int steps,
                   double g, uint64_t seed, SampleStats* stats = nullptr);

Latent sample(LdmModel& model, const Tensor& cond, int steps, double g, uint64_t seed,
              SampleStats* stats = nullptr);

/// Eq-style auxiliary term for one sample: predicts the noise, reconstructs
/// the clean latent, embeds it, and returns w(n) * MSE(e_audio, e_latent).
double latent_clap_loss_term(const Tensor& e_audio, LdmModel& model,
                             LatentClapModel& lclap, const Latent& s_n, int n,
                             const Tensor* cond, const LossConfig& cfg);

struct FinetuneConfig {
  int epochs = 14;
  int batch = 16;
  double lr = 1e-3;
  uint64_t seed = 7;
  LossConfig loss;
  bool tuning = false;  // also train the text tuning layer
};

struct FinetuneEpochLog {
  int epoch = 0;
  double ddpm = 0.0;
  double lclap = 0.0;
  double total = 0.0;
};

/// Fine-tunes the epsilon network (and optionally the tuning layer) on
/// cached VAE latents with the combined loss. CLAP (except the tuning
/// layer), VAE and the Latent CLAP encoder stay frozen. The auxiliary term
/// is computed when lambda > 0 or force_aux is set.
std::vector<FinetuneEpochLog> finetune_ldm(LdmModel& model, ClapModel& clap,
                                           LatentClapModel& lclap,
                                           const std::vector<Latent>& latents,
                                           const std::vector<int>& label_ids,
                                           const std::vector<Tensor>& audio_embs,
                                           const FinetuneConfig& cfg);

}  // namespace foley
