// Copyright (c) 2026 The foley-synth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace foley {

/// Hierarchical experiment configuration. The `desk` preset runs the whole
/// pipeline on CPU in minutes; the `paper` preset pins the reference
/// hyperparameters (r=4, C=8, D=512, N=1000/200, g=2.0, lr 3e-6).
struct ExperimentConfig {
  std::string preset = "desk";
  uint64_t seed = 7;

  struct Dsp {
    int sample_rate = 16000;
    int window_length = 1024;
    int hop = 640;
    int mel_bins = 32;
    double fmin = 0.0;
    double fmax = 8000.0;
    double log_floor = 1e-5;
    double clip_seconds = 10.24;  // length after repetition-extension
    int griffin_lim_iters = 32;
  } dsp;

  struct Dataset {
    std::vector<std::string> classes;  // defaults to the 7 labels
    int per_class = 64;
    double clip_seconds = 4.0;
  } dataset;

  struct Clap {
    int embed_dim = 64;
    int label_embed_dim = 32;
    std::vector<int> channels = {8, 16, 32, 64};
    double temperature_init = 0.07;
    bool tuning_enabled = false;
    int epochs = 18;
    int batch = 16;
    double lr = 1e-3;
  } clap;

  struct Vae {
    int latent_channels = 4;
    int ratio = 4;
    double kl_weight = 1e-4;
    std::vector<int> channels = {16, 32};  // encoder widths per downsample
    int epochs = 12;
    int batch = 8;
    double lr = 1e-3;
  } vae;

  struct LatentClap {
    std::vector<int> channels = {32, 64, 128};
    int epochs = 25;
    int batch = 16;
    double lr = 1e-3;
  } latent_clap;

  struct Ldm {
    int base_channels = 16;
    int time_dim = 32;
    int steps = 1000;  // N during training
    double beta_start = 1e-4;
    double beta_end = 2e-2;
    int epochs = 14;
    int batch = 16;
    double lr = 1e-3;
    bool tuning = false;  // fine-tune the text tuning layer as well
    struct Loss {
      double lambda = 40.0;
      double weight_base = 10.0;
      double weight_scale = 200.0;
      double cond_dropout_p = 0.1;
      bool force_aux = false;  // compute the auxiliary term even when lambda == 0
    } loss;
  } ldm;

  struct Generation {
    double g = 2.0;
    int steps = 100;  // denoising steps at inference
    std::map<std::string, double> thresholds;
    double max_attempt_factor = 10.0;
    int count_per_class = 8;
    bool filter = false;
  } generation;

  struct Eval {
    double shrinkage = 1e-6;
    int clips_per_class = 100;  // generated clips per class for FAD
    uint64_t embedder_seed_offset = 1000;
    int embedder_epochs = 18;
  } eval;

  struct Sweep {
    std::vector<double> lambdas = {0.0, 20.0, 40.0};
    int epochs = 0;  // 0 = use ldm.epochs
  } sweep;
};

/// Baseline config for a preset name ("desk" or "paper").
ExperimentConfig preset_config(const std::string& name);

/// Loads a config: preset defaults, overlaid with the optional JSON file,
/// then with dotted-path overrides ("ldm.loss.lambda=2000",
/// "generation.thresholds.keyboard=0.15"). FOLEY_SEED, when set and no
/// explicit seed is given, provides the global seed.
ExperimentConfig load_config(const std::string& file_path,
                             const std::vector<std::string>& overrides,
                             const std::string& default_preset = "desk");

std::string config_to_json(const ExperimentConfig& cfg);

/// Hash of the config sections that determine a stage's output, plus the
/// global seed. Stage names follow the CLI subcommands.
std::string stage_config_hash(const ExperimentConfig& cfg, const std::string& stage);

}  // namespace foley
