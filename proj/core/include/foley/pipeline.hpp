// Copyright (c) 2026 The foley-synth Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "foley/clap.hpp"
#include "foley/config.hpp"
#include "foley/dataset.hpp"
#include "foley/fad.hpp"
#include "foley/generate.hpp"
#include "foley/latent_clap.hpp"
#include "foley/ldm.hpp"
#include "foley/vae.hpp"

namespace foley {

/// Raised when a stage needs an upstream checkpoint that is absent; the
/// message names the stage to run.
struct MissingStageError : std::runtime_error {
  explicit MissingStageError(const std::string& what, std::string stage_name)
      : std::runtime_error(what), stage(std::move(stage_name)) {}
  std::string stage;
};

struct StaleCheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunPaths {
  std::string run_dir;

  std::string data_dir() const { return run_dir + "/data"; }
  std::string manifest_path() const { return data_dir() + "/manifest.jsonl"; }
  std::string ckpt(const std::string& name) const { return run_dir + "/ckpt/" + name; }
  std::string gen_dir() const { return run_dir + "/gen"; }
  std::string eval_dir() const { return run_dir + "/eval"; }
  std::string ref_stats_dir() const { return eval_dir() + "/ref_stats"; }
  std::string sweep_dir() const { return run_dir + "/sweep"; }
  std::string run_json() const { return run_dir + "/run.json"; }
};

MelConfig mel_config(const ExperimentConfig& cfg);
int mel_frames_per_clip(const ExperimentConfig& cfg);

struct MelCache {
  std::vector<MelSpec> mels;
  std::vector<int> label_ids;
};

/// Loads every manifest clip, repetition-extends to dsp.clip_seconds and
/// computes the Mel grid.
MelCache build_mel_cache(const Manifest& manifest, const ExperimentConfig& cfg);

// Stage runners. Each writes its outputs under the run directory, records a
// run.json entry and enforces upstream checkpoint provenance (config-hash
// equality) unless force is set.
Manifest run_make_data(const ExperimentConfig& cfg, const RunPaths& paths);
void run_train_clap(const ExperimentConfig& cfg, const RunPaths& paths,
                    bool eval_embedder = false, bool force = false);
void run_train_vae(const ExperimentConfig& cfg, const RunPaths& paths,
                   bool force = false);
void run_train_latent_clap(const ExperimentConfig& cfg, const RunPaths& paths,
                           bool force = false);
void run_finetune_ldm(const ExperimentConfig& cfg, const RunPaths& paths,
                      bool force = false);
void run_generate(const ExperimentConfig& cfg, const RunPaths& paths,
                  bool force = false);
void build_ref_stats(const ExperimentConfig& cfg, const RunPaths& paths,
                     bool force = false);
EvalReport run_evaluate(const ExperimentConfig& cfg, const RunPaths& paths,
                        const std::string& gen_dir, bool force = false);

struct SweepRow {
  double lambda = 0.0;
  double avg_fad = 0.0;
  double std_fad = 0.0;
};
std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, const RunPaths& paths,
                                bool force = false);

struct ThroughputReport {
  int requested = 0;
  double unfiltered_wall_s = 0.0;
  double unfiltered_clips_per_s = 0.0;
  double filtered_wall_s = 0.0;
  double filtered_clips_per_s = 0.0;
  double acceptance_rate = 1.0;
  long long filtered_generated_total = 0;
};
ThroughputReport run_bench_throughput(const ExperimentConfig& cfg,
                                      const RunPaths& paths, int count,
                                      bool force = false);

// Checkpoint-backed model loaders (shared with tests).
ClapModel load_clap_checkpoint(const ExperimentConfig& cfg, const RunPaths& paths,
                               const std::string& name, bool force = false);
VaeModel load_vae_checkpoint(const ExperimentConfig& cfg, const RunPaths& paths,
                             bool force = false);
LatentClapModel load_latent_clap_checkpoint(const ExperimentConfig& cfg,
                                            const RunPaths& paths, bool force = false);
LdmModel load_ldm_checkpoint(const ExperimentConfig& cfg, const RunPaths& paths,
                             bool force = false);

/// Records a stage entry (merged by stage name) into run.json.
void record_run_entry(const RunPaths& paths, const std::string& stage,
                      const std::string& json_payload);

}  // namespace foley
