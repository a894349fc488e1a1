// Copyright (c) 2026 The foley-synth Authors
// SPDX-License-Identifier: Apache-2.0

#include "foley/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "foley/checkpoint.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace foley {

namespace {

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

ClapModelConfig clap_model_config(const ExperimentConfig& cfg) {
  ClapModelConfig c;
  c.embed_dim = cfg.clap.embed_dim;
  c.label_embed_dim = cfg.clap.label_embed_dim;
  c.channels = cfg.clap.channels;
  c.mel_bins = cfg.dsp.mel_bins;
  c.temperature_init = cfg.clap.temperature_init;
  c.tuning_enabled = true;  // layer always allocated; participation is per call
  c.labels = cfg.dataset.classes;
  return c;
}

VaeModelConfig vae_model_config(const ExperimentConfig& cfg) {
  VaeModelConfig c;
  c.latent_channels = cfg.vae.latent_channels;
  c.ratio = cfg.vae.ratio;
  c.channels = cfg.vae.channels;
  c.mel_bins = cfg.dsp.mel_bins;
  c.kl_weight = cfg.vae.kl_weight;
  return c;
}

LatentClapModelConfig latent_clap_model_config(const ExperimentConfig& cfg) {
  LatentClapModelConfig c;
  c.channels = cfg.latent_clap.channels;
  c.latent_channels = cfg.vae.latent_channels;
  c.embed_dim = cfg.clap.embed_dim;
  return c;
}

LdmModelConfig ldm_model_config(const ExperimentConfig& cfg) {
  LdmModelConfig c;
  c.latent_channels = cfg.vae.latent_channels;
  c.latent_height = cfg.dsp.mel_bins / cfg.vae.ratio;
  c.latent_width = mel_frames_per_clip(cfg) / cfg.vae.ratio;
  c.base_channels = cfg.ldm.base_channels;
  c.time_dim = cfg.ldm.time_dim;
  c.cond_dim = cfg.clap.embed_dim;
  return c;
}

Manifest load_corpus(const ExperimentConfig& cfg, const RunPaths& paths) {
  if (!fs::exists(paths.manifest_path()))
    throw MissingStageError("no corpus manifest at " + paths.manifest_path() +
                                "; run make-data first",
                            "make-data");
  Manifest m = load_manifest(paths.manifest_path());
  validate_manifest(m, cfg.dataset.classes);
  return m;
}

void check_provenance(const ExperimentConfig& cfg, const std::string& stage,
                      const CheckpointMeta& meta, bool force) {
  std::string expected = stage_config_hash(cfg, stage);
  if (meta.config_hash != expected && !force)
    throw StaleCheckpointError(
        "checkpoint for stage " + stage + " was built with a different config (hash " +
        meta.config_hash + ", current " + expected + "); rerun " + stage +
        " or pass --force");
}

std::string require_ckpt(const RunPaths& paths, const std::string& name,
                         const std::string& stage) {
  std::string dir = paths.ckpt(name);
  if (!checkpoint_exists(dir))
    throw MissingStageError("missing checkpoint " + dir + "; run " + stage + " first",
                            stage);
  return dir;
}

double meta_double(const CheckpointMeta& meta, const std::string& key, double fallback) {
  auto it = meta.extra.find(key);
  return it == meta.extra.end() ? fallback : std::stod(it->second);
}

GenerationConfig make_generation_config(const ExperimentConfig& cfg, uint64_t seed) {
  GenerationConfig g;
  g.g = cfg.generation.g;
  g.inference_steps = cfg.generation.steps;
  g.thresholds = cfg.generation.thresholds;
  g.max_attempt_factor = cfg.generation.max_attempt_factor;
  g.seed = seed;
  g.griffin_lim_iters = cfg.dsp.griffin_lim_iters;
  g.use_tuning = cfg.ldm.tuning;
  g.mel = mel_config(cfg);
  return g;
}

void write_generation_report(const std::string& path, const GenerationReport& r) {
  json j = {{"requested", r.requested},
            {"generated_total", r.generated_total},
            {"accepted", r.accepted},
            {"acceptance_rate", r.acceptance_rate},
            {"wall_time_s", r.wall_time_s},
            {"under_quota", r.under_quota},
            {"per_clip_similarity", r.per_clip_similarity}};
  std::ofstream f(path);
  f << j.dump(2) << "\n";
}

struct LdmCaches {
  std::vector<Latent> latents;
  std::vector<int> label_ids;
  std::vector<Tensor> audio_embs;
};

LdmCaches build_ldm_caches(const ExperimentConfig& cfg, const MelCache& cache,
                           ClapModel& clap, VaeModel& vae) {
  LdmCaches out;
  out.label_ids = cache.label_ids;
  out.latents.reserve(cache.mels.size());
  out.audio_embs.reserve(cache.mels.size());
  for (const auto& m : cache.mels) {
    out.latents.push_back(vae.encode(m, VaeModel::EncodeMode::kMean));
    out.audio_embs.push_back(clap.encode_audio(m));
  }
  (void)cfg;
  return out;
}

void save_model_with_meta(const std::string& dir, const ParamStore& store,
                          CheckpointMeta meta) {
  save_checkpoint(dir, store, meta);
}

}  // namespace

MelConfig mel_config(const ExperimentConfig& cfg) {
  MelConfig m;
  m.sample_rate = cfg.dsp.sample_rate;
  m.window_length = cfg.dsp.window_length;
  m.hop = cfg.dsp.hop;
  m.mel_bins = cfg.dsp.mel_bins;
  m.fmin = cfg.dsp.fmin;
  m.fmax = cfg.dsp.fmax;
  m.log_floor = cfg.dsp.log_floor;
  return m;
}

int mel_frames_per_clip(const ExperimentConfig& cfg) {
  double samples = cfg.dsp.clip_seconds * cfg.dsp.sample_rate;
  long long n = std::llround(samples);
  if (n % cfg.dsp.hop != 0)
    throw std::invalid_argument(
        "config: clip_seconds * sample_rate must be a multiple of hop");
  return static_cast<int>(n / cfg.dsp.hop);
}

MelCache build_mel_cache(const Manifest& manifest, const ExperimentConfig& cfg) {
  MelCache out;
  MelConfig mc = mel_config(cfg);
  long long target =
      std::llround(cfg.dsp.clip_seconds * cfg.dsp.sample_rate);
  for (const auto& e : manifest.entries) {
    Waveform w = load_wav(manifest.resolve(e), cfg.dsp.sample_rate);
    w = extend_clip(w, target);
    out.mels.push_back(mel_spectrogram(w, mc));
    out.label_ids.push_back(label_index(e.label, cfg.dataset.classes));
  }
  return out;
}

void record_run_entry(const RunPaths& paths, const std::string& stage,
                      const std::string& json_payload) {
  fs::create_directories(paths.run_dir);
  json root = json::object();
  if (fs::exists(paths.run_json())) {
    std::ifstream f(paths.run_json());
    f >> root;
  }
  root[stage] = json::parse(json_payload);
  std::ofstream f(paths.run_json());
  f << root.dump(2) << "\n";
}

Manifest run_make_data(const ExperimentConfig& cfg, const RunPaths& paths) {
  double t0 = now_s();
  Manifest m = build_corpus(cfg.dataset.classes, cfg.dataset.per_class, cfg.seed,
                            paths.data_dir(), cfg.dataset.clip_seconds,
                            cfg.dsp.sample_rate);
  json j = {{"entries", m.entries.size()},
            {"config_hash", stage_config_hash(cfg, "make-data")},
            {"wall_s", now_s() - t0}};
  record_run_entry(paths, "make-data", j.dump());
  return m;
}

void run_train_clap(const ExperimentConfig& cfg, const RunPaths& paths,
                    bool eval_embedder, bool force) {
  (void)force;
  double t0 = now_s();
  Manifest m = load_corpus(cfg, paths);
  MelCache cache = build_mel_cache(m, cfg);
  uint64_t seed =
      eval_embedder ? cfg.seed + cfg.eval.embedder_seed_offset : cfg.seed;
  ClapModel model = ClapModel::init(clap_model_config(cfg), seed);
  ClapTrainConfig tc;
  tc.epochs = eval_embedder ? cfg.eval.embedder_epochs : cfg.clap.epochs;
  tc.batch = cfg.clap.batch;
  tc.lr = cfg.clap.lr;
  tc.seed = seed;
  auto logs = train_clap(model, cache.mels, cache.label_ids, tc);
  CheckpointMeta meta;
  meta.module = eval_embedder ? "clap-eval" : "clap";
  meta.config_hash = stage_config_hash(cfg, "train-clap");
  meta.extra["embed_dim"] = std::to_string(cfg.clap.embed_dim);
  meta.extra["labels"] = [&] {
    std::string s;
    for (const auto& l : cfg.dataset.classes) s += (s.empty() ? "" : ",") + l;
    return s;
  }();
  std::string name = eval_embedder ? "clap-eval" : "clap";
  save_model_with_meta(paths.ckpt(name), model.store(), meta);
  json j = {{"epochs", logs.size()},
            {"final_loss", logs.empty() ? 0.0 : logs.back().loss},
            {"checkpoint_hash", checkpoint_hash(paths.ckpt(name))},
            {"wall_s", now_s() - t0}};
  record_run_entry(paths, name == "clap" ? "train-clap" : "train-clap-eval", j.dump());
}

void run_train_vae(const ExperimentConfig& cfg, const RunPaths& paths, bool force) {
  (void)force;
  double t0 = now_s();
  Manifest m = load_corpus(cfg, paths);
  MelCache cache = build_mel_cache(m, cfg);
  VaeModel model = VaeModel::init(vae_model_config(cfg), cfg.seed);
  VaeTrainConfig tc;
  tc.epochs = cfg.vae.epochs;
  tc.batch = cfg.vae.batch;
  tc.lr = cfg.vae.lr;
  tc.seed = cfg.seed;
  auto logs = train_vae(model, cache.mels, tc);
  CheckpointMeta meta;
  meta.module = "vae";
  meta.config_hash = stage_config_hash(cfg, "train-vae");
  meta.extra["mel_mean"] = std::to_string(model.mel_mean);
  meta.extra["mel_std"] = std::to_string(model.mel_std);
  meta.extra["latent_std"] = std::to_string(model.latent_std);
  save_model_with_meta(paths.ckpt("vae"), model.store(), meta);
  json j = {{"epochs", logs.size()},
            {"final_loss", logs.empty() ? 0.0 : logs.back().loss},
            {"latent_std", model.latent_std},
            {"checkpoint_hash", checkpoint_hash(paths.ckpt("vae"))},
            {"wall_s", now_s() - t0}};
  record_run_entry(paths, "train-vae", j.dump());
}

ClapModel load_clap_checkpoint(const ExperimentConfig& cfg, const RunPaths& paths,
                               const std::string& name, bool force) {
  std::string dir = require_ckpt(paths, name, "train-clap");
  ClapModel model = ClapModel::init(clap_model_config(cfg), cfg.seed);
  CheckpointMeta meta = load_checkpoint(dir, model.store());
  check_provenance(cfg, "train-clap", meta, force);
  return model;
}

VaeModel load_vae_checkpoint(const ExperimentConfig& cfg, const RunPaths& paths,
                             bool force) {
  std::string dir = require_ckpt(paths, "vae", "train-vae");
  VaeModel model = VaeModel::init(vae_model_config(cfg), cfg.seed);
  CheckpointMeta meta = load_checkpoint(dir, model.store());
  check_provenance(cfg, "train-vae", meta, force);
  model.mel_mean = meta_double(meta, "mel_mean", 0.0);
  model.mel_std = meta_double(meta, "mel_std", 1.0);
  model.latent_std = meta_double(meta, "latent_std", 1.0);
  return model;
}

LatentClapModel load_latent_clap_checkpoint(const ExperimentConfig& cfg,
                                            const RunPaths& paths, bool force) {
  std::string dir = require_ckpt(paths, "latent_clap", "train-latent-clap");
  LatentClapModel model = LatentClapModel::init(latent_clap_model_config(cfg), cfg.seed);
  CheckpointMeta meta = load_checkpoint(dir, model.store());
  check_provenance(cfg, "train-latent-clap", meta, force);
  return model;
}

LdmModel load_ldm_checkpoint(const ExperimentConfig& cfg, const RunPaths& paths,
                             bool force) {
  std::string dir = require_ckpt(paths, "ldm", "finetune-ldm");
  NoiseSchedule sched = make_schedule(cfg.ldm.steps, cfg.ldm.beta_start, cfg.ldm.beta_end);
  LdmModel model = LdmModel::init(ldm_model_config(cfg), sched, cfg.seed);
  CheckpointMeta meta = load_checkpoint(dir, model.store());
  check_provenance(cfg, "finetune-ldm", meta, force);
  return model;
}

void run_train_latent_clap(const ExperimentConfig& cfg, const RunPaths& paths,
                           bool force) {
  double t0 = now_s();
  Manifest m = load_corpus(cfg, paths);
  MelCache cache = build_mel_cache(m, cfg);
  ClapModel clap = load_clap_checkpoint(cfg, paths, "clap", force);
  VaeModel vae = load_vae_checkpoint(cfg, paths, force);
  clap.freeze();
  vae.store().set_trainable(false);
  uint64_t clap_hash_before = clap.store().value_hash();
  uint64_t vae_hash_before = vae.store().value_hash();

  LdmCaches caches = build_ldm_caches(cfg, cache, clap, vae);
  LatentClapModel model = LatentClapModel::init(latent_clap_model_config(cfg), cfg.seed);
  LatentClapTrainConfig tc;
  tc.epochs = cfg.latent_clap.epochs;
  tc.batch = cfg.latent_clap.batch;
  tc.lr = cfg.latent_clap.lr;
  tc.seed = cfg.seed;
  auto logs = train_latent_clap(model, caches.latents, caches.audio_embs, tc);

  if (clap.store().value_hash() != clap_hash_before ||
      vae.store().value_hash() != vae_hash_before)
    throw std::logic_error("train-latent-clap: frozen upstream model changed");

  CheckpointMeta meta;
  meta.module = "latent_clap";
  meta.config_hash = stage_config_hash(cfg, "train-latent-clap");
  meta.upstream["clap"] = checkpoint_hash(paths.ckpt("clap"));
  meta.upstream["vae"] = checkpoint_hash(paths.ckpt("vae"));
  save_model_with_meta(paths.ckpt("latent_clap"), model.store(), meta);
  json j = {{"epochs", logs.size()},
            {"final_loss", logs.empty() ? 0.0 : logs.back().loss},
            {"checkpoint_hash", checkpoint_hash(paths.ckpt("latent_clap"))},
            {"wall_s", now_s() - t0}};
  record_run_entry(paths, "train-latent-clap", j.dump());
}

void run_finetune_ldm(const ExperimentConfig& cfg, const RunPaths& paths, bool force) {
  double t0 = now_s();
  Manifest m = load_corpus(cfg, paths);
  MelCache cache = build_mel_cache(m, cfg);
  ClapModel clap = load_clap_checkpoint(cfg, paths, "clap", force);
  VaeModel vae = load_vae_checkpoint(cfg, paths, force);
  LatentClapModel lclap = load_latent_clap_checkpoint(cfg, paths, force);
  clap.freeze();
  vae.store().set_trainable(false);
  lclap.freeze();

  LdmCaches caches = build_ldm_caches(cfg, cache, clap, vae);
  NoiseSchedule sched = make_schedule(cfg.ldm.steps, cfg.ldm.beta_start, cfg.ldm.beta_end);
  LdmModel model = LdmModel::init(ldm_model_config(cfg), sched, cfg.seed);

  FinetuneConfig fc;
  fc.epochs = cfg.ldm.epochs;
  fc.batch = cfg.ldm.batch;
  fc.lr = cfg.ldm.lr;
  fc.seed = cfg.seed;
  fc.loss.lambda = cfg.ldm.loss.lambda;
  fc.loss.weight_base = cfg.ldm.loss.weight_base;
  fc.loss.weight_scale = cfg.ldm.loss.weight_scale;
  fc.loss.cond_dropout_p = cfg.ldm.loss.cond_dropout_p;
  fc.loss.force_aux = cfg.ldm.loss.force_aux;
  fc.tuning = cfg.ldm.tuning;
  auto logs = finetune_ldm(model, clap, lclap, caches.latents, caches.label_ids,
                           caches.audio_embs, fc);

  CheckpointMeta meta;
  meta.module = "ldm";
  meta.config_hash = stage_config_hash(cfg, "finetune-ldm");
  meta.upstream["clap"] = checkpoint_hash(paths.ckpt("clap"));
  meta.upstream["vae"] = checkpoint_hash(paths.ckpt("vae"));
  meta.upstream["latent_clap"] = checkpoint_hash(paths.ckpt("latent_clap"));
  meta.extra["tuning"] = cfg.ldm.tuning ? "1" : "0";
  save_model_with_meta(paths.ckpt("ldm"), model.store(), meta);
  if (cfg.ldm.tuning) {
    ParamStore tuning_store;
    Param& tw = tuning_store.add("tuning.w", clap.store().at("tuning.w").value.dims);
    tw.value = clap.store().at("tuning.w").value;
    Param& tb = tuning_store.add("tuning.b", clap.store().at("tuning.b").value.dims);
    tb.value = clap.store().at("tuning.b").value;
    CheckpointMeta tmeta;
    tmeta.module = "ldm-tuning";
    tmeta.config_hash = meta.config_hash;
    save_checkpoint(paths.ckpt("ldm-tuning"), tuning_store, tmeta);
  }

  // Training log, line-delimited.
  {
    fs::create_directories(paths.ckpt("ldm"));
    std::ofstream f(paths.ckpt("ldm") + "/train_log.jsonl");
    for (const auto& l : logs) {
      json row = {{"epoch", l.epoch},
                  {"ddpm_loss", l.ddpm},
                  {"lclap_loss", l.lclap},
                  {"total", l.total}};
      f << row.dump() << "\n";
    }
  }

  json j = {{"epochs", logs.size()},
            {"final_total", logs.empty() ? 0.0 : logs.back().total},
            {"lambda", cfg.ldm.loss.lambda},
            {"checkpoint_hash", checkpoint_hash(paths.ckpt("ldm"))},
            {"wall_s", now_s() - t0}};
  record_run_entry(paths, "finetune-ldm", j.dump());
}

namespace {

/// Loads the generation stack; applies tuned tuning-layer parameters when the
/// LDM checkpoint carries them.
struct GenStack {
  ClapModel clap;
  VaeModel vae;
  LatentClapModel lclap;
  LdmModel ldm;
};

GenStack load_gen_stack(const ExperimentConfig& cfg, const RunPaths& paths, bool force) {
  GenStack s{load_clap_checkpoint(cfg, paths, "clap", force),
             load_vae_checkpoint(cfg, paths, force),
             load_latent_clap_checkpoint(cfg, paths, force),
             load_ldm_checkpoint(cfg, paths, force)};
  if (checkpoint_exists(paths.ckpt("ldm-tuning"))) {
    ParamStore tuning_store;
    tuning_store.add("tuning.w", s.clap.store().at("tuning.w").value.dims);
    tuning_store.add("tuning.b", s.clap.store().at("tuning.b").value.dims);
    load_checkpoint(paths.ckpt("ldm-tuning"), tuning_store);
    s.clap.store().at("tuning.w").value = tuning_store.at("tuning.w").value;
    s.clap.store().at("tuning.b").value = tuning_store.at("tuning.b").value;
  }
  s.clap.freeze();
  s.vae.store().set_trainable(false);
  s.lclap.freeze();
  s.ldm.freeze();
  return s;
}

}  // namespace

void run_generate(const ExperimentConfig& cfg, const RunPaths& paths, bool force) {
  double t0 = now_s();
  GenStack stack = load_gen_stack(cfg, paths, force);
  GenerationModels models{stack.ldm, stack.vae, stack.clap};
  json per_class = json::object();
  for (const auto& label : cfg.dataset.classes) {
    GenerationConfig gc = make_generation_config(cfg, mix_seed(cfg.seed, "gen:" + label));
    fs::path dir = fs::path(paths.gen_dir()) / label;
    fs::create_directories(dir);
    GenerationReport report;
    std::vector<GeneratedClip> clips;
    int K = cfg.generation.count_per_class;
    if (cfg.generation.filter) {
      GenerateFilteredResult r = generate_filtered(models, label, K, gc);
      clips = std::move(r.clips);
      report = r.report;
    } else {
      double g0 = now_s();
      clips = generate_audio(models, label, K, gc);
      report.requested = K;
      report.generated_total = K;
      report.accepted = K;
      report.acceptance_rate = K > 0 ? 1.0 : 0.0;
      report.wall_time_s = now_s() - g0;
    }
    for (size_t i = 0; i < clips.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "%04zu.wav", i);
      save_wav((dir / name).string(), clips[i].audio);
    }
    write_generation_report((dir / "report.json").string(), report);
    per_class[label] = {{"accepted", report.accepted},
                        {"generated_total", report.generated_total},
                        {"under_quota", report.under_quota}};
  }
  json j = {{"classes", per_class},
            {"filter", cfg.generation.filter},
            {"wall_s", now_s() - t0}};
  record_run_entry(paths, "generate", j.dump());
}

void build_ref_stats(const ExperimentConfig& cfg, const RunPaths& paths, bool force) {
  Manifest m = load_corpus(cfg, paths);
  ClapModel embedder = load_clap_checkpoint(cfg, paths, "clap-eval", force);
  embedder.freeze();
  MelConfig mc = mel_config(cfg);
  long long target = std::llround(cfg.dsp.clip_seconds * cfg.dsp.sample_rate);
  fs::create_directories(paths.ref_stats_dir());
  for (const auto& label : cfg.dataset.classes) {
    std::vector<Waveform> waves;
    for (const auto& e : m.entries)
      if (e.label == label)
        waves.push_back(extend_clip(load_wav(m.resolve(e), cfg.dsp.sample_rate), target));
    if (waves.size() < 2)
      throw std::runtime_error("ref stats: class " + label + " has fewer than 2 clips");
    std::vector<Tensor> embs = embed_set(waves, embedder, mc);
    EmbeddingStats stats = fit_stats(embs, cfg.eval.shrinkage);
    save_stats(paths.ref_stats_dir() + "/" + label + ".stats.bin", stats);
  }
}

EvalReport run_evaluate(const ExperimentConfig& cfg, const RunPaths& paths,
                        const std::string& gen_dir, bool force) {
  double t0 = now_s();
  if (!fs::exists(paths.ref_stats_dir())) build_ref_stats(cfg, paths, force);
  ClapModel embedder = load_clap_checkpoint(cfg, paths, "clap-eval", force);
  embedder.freeze();
  EvalReport report = evaluate(gen_dir, paths.ref_stats_dir(), embedder,
                               cfg.dataset.classes, mel_config(cfg), cfg.eval.shrinkage);
  fs::create_directories(paths.eval_dir());
  {
    std::ofstream f(paths.eval_dir() + "/report.txt");
    f << format_eval_table(report);
  }
  {
    std::ofstream f(paths.eval_dir() + "/report.jsonl");
    for (const auto& r : report.rows) {
      json row = {{"label", r.label},
                  {"fad", r.fad},
                  {"mean_similarity", r.mean_similarity},
                  {"count", r.count}};
      f << row.dump() << "\n";
    }
    json avg = {{"label", "Average"}, {"fad", report.average_fad}};
    json sd = {{"label", "Std"}, {"fad", report.std_fad}};
    f << avg.dump() << "\n" << sd.dump() << "\n";
  }
  json j = {{"average_fad", report.average_fad},
            {"std_fad", report.std_fad},
            {"gen_dir", gen_dir},
            {"wall_s", now_s() - t0}};
  record_run_entry(paths, "evaluate", j.dump());
  return report;
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, const RunPaths& paths,
                                bool force) {
  if (cfg.sweep.lambdas.empty())
    throw std::invalid_argument("sweep: lambda list is empty");
  double t0 = now_s();
  std::vector<SweepRow> rows;
  json jrows = json::array();
  for (double lambda : cfg.sweep.lambdas) {
    ExperimentConfig row_cfg = cfg;
    row_cfg.ldm.loss.lambda = lambda;
    if (cfg.sweep.epochs > 0) row_cfg.ldm.epochs = cfg.sweep.epochs;
    RunPaths row_paths;
    char sub[64];
    std::snprintf(sub, sizeof(sub), "lambda_%g", lambda);
    row_paths.run_dir = paths.sweep_dir() + "/" + sub;
    fs::create_directories(row_paths.run_dir);
    // The corpus and upstream checkpoints are shared with the parent run.
    fs::create_directories(row_paths.run_dir + "/ckpt");
    if (!fs::exists(row_paths.data_dir()))
      fs::create_directory_symlink(fs::absolute(paths.data_dir()),
                                   row_paths.data_dir());
    for (const auto& name : {"clap", "clap-eval", "vae", "latent_clap"}) {
      fs::path dst = row_paths.ckpt(name);
      if (!fs::exists(dst))
        fs::create_directory_symlink(fs::absolute(paths.ckpt(name)), dst);
    }
    run_finetune_ldm(row_cfg, row_paths, force);
    run_generate(row_cfg, row_paths, force);
    if (!fs::exists(row_paths.ref_stats_dir())) {
      fs::create_directories(row_paths.eval_dir());
      if (!fs::exists(paths.ref_stats_dir())) build_ref_stats(cfg, paths, force);
      fs::create_directory_symlink(fs::absolute(paths.ref_stats_dir()),
                                   row_paths.ref_stats_dir());
    }
    EvalReport report = run_evaluate(row_cfg, row_paths, row_paths.gen_dir(), force);
    rows.push_back({lambda, report.average_fad, report.std_fad});
    jrows.push_back({{"lambda", lambda},
                     {"avg_fad", report.average_fad},
                     {"std_fad", report.std_fad}});
  }
  fs::create_directories(paths.sweep_dir());
  {
    std::ofstream f(paths.sweep_dir() + "/table.txt");
    char line[96];
    std::snprintf(line, sizeof(line), "%12s %12s %12s\n", "lambda", "avg_FAD",
                  "std_FAD");
    f << line;
    for (const auto& r : rows) {
      std::snprintf(line, sizeof(line), "%12g %12.4f %12.4f\n", r.lambda, r.avg_fad,
                    r.std_fad);
      f << line;
    }
  }
  {
    std::ofstream f(paths.sweep_dir() + "/rows.jsonl");
    for (const auto& r : jrows) f << r.dump() << "\n";
  }
  json j = {{"rows", jrows}, {"wall_s", now_s() - t0}};
  record_run_entry(paths, "sweep-lambda", j.dump());
  return rows;
}

ThroughputReport run_bench_throughput(const ExperimentConfig& cfg, const RunPaths& paths,
                                      int count, bool force) {
  ThroughputReport rep;
  rep.requested = count;
  if (count == 0) {
    record_run_entry(paths, "bench-throughput", json{{"requested", 0}}.dump());
    return rep;
  }
  GenStack stack = load_gen_stack(cfg, paths, force);
  GenerationModels models{stack.ldm, stack.vae, stack.clap};
  const std::string& label = cfg.dataset.classes.front();
  GenerationConfig gc = make_generation_config(cfg, mix_seed(cfg.seed, "bench"));

  double t0 = now_s();
  std::vector<GeneratedClip> plain = generate_audio(models, label, count, gc);
  rep.unfiltered_wall_s = now_s() - t0;
  rep.unfiltered_clips_per_s =
      rep.unfiltered_wall_s > 0 ? count / rep.unfiltered_wall_s : 0.0;

  GenerateFilteredResult filtered = generate_filtered(models, label, count, gc);
  rep.filtered_wall_s = filtered.report.wall_time_s;
  rep.filtered_clips_per_s =
      rep.filtered_wall_s > 0 ? count / rep.filtered_wall_s : 0.0;
  rep.acceptance_rate = filtered.report.acceptance_rate;
  rep.filtered_generated_total = filtered.report.generated_total;

  json j = {{"requested", count},
            {"unfiltered_wall_s", rep.unfiltered_wall_s},
            {"unfiltered_clips_per_s", rep.unfiltered_clips_per_s},
            {"filtered_wall_s", rep.filtered_wall_s},
            {"filtered_clips_per_s", rep.filtered_clips_per_s},
            {"acceptance_rate", rep.acceptance_rate},
            {"filtered_generated_total", rep.filtered_generated_total}};
  record_run_entry(paths, "bench-throughput", j.dump());
  (void)plain;
  return rep;
}

}  // namespace foley
