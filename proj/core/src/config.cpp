// Copyright (c) 2026 The foley-synth Authors
// SPDX-License-Identifier: Apache-2.0

#include "foley/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "foley/dataset.hpp"
#include "foley/rng.hpp"

using json = nlohmann::json;

namespace foley {

namespace {

json to_json(const ExperimentConfig& c) {
  json thresholds = json::object();
  for (const auto& [k, v] : c.generation.thresholds) thresholds[k] = v;
  return json{
      {"preset", c.preset},
      {"seed", c.seed},
      {"dsp",
       {{"sample_rate", c.dsp.sample_rate},
        {"window_length", c.dsp.window_length},
        {"hop", c.dsp.hop},
        {"mel_bins", c.dsp.mel_bins},
        {"fmin", c.dsp.fmin},
        {"fmax", c.dsp.fmax},
        {"log_floor", c.dsp.log_floor},
        {"clip_seconds", c.dsp.clip_seconds},
        {"griffin_lim_iters", c.dsp.griffin_lim_iters}}},
      {"dataset",
       {{"classes", c.dataset.classes},
        {"per_class", c.dataset.per_class},
        {"clip_seconds", c.dataset.clip_seconds}}},
      {"clap",
       {{"embed_dim", c.clap.embed_dim},
        {"label_embed_dim", c.clap.label_embed_dim},
        {"channels", c.clap.channels},
        {"temperature_init", c.clap.temperature_init},
        {"tuning_enabled", c.clap.tuning_enabled},
        {"epochs", c.clap.epochs},
        {"batch", c.clap.batch},
        {"lr", c.clap.lr}}},
      {"vae",
       {{"latent_channels", c.vae.latent_channels},
        {"ratio", c.vae.ratio},
        {"kl_weight", c.vae.kl_weight},
        {"channels", c.vae.channels},
        {"epochs", c.vae.epochs},
        {"batch", c.vae.batch},
        {"lr", c.vae.lr}}},
      {"latent_clap",
       {{"channels", c.latent_clap.channels},
        {"epochs", c.latent_clap.epochs},
        {"batch", c.latent_clap.batch},
        {"lr", c.latent_clap.lr}}},
      {"ldm",
       {{"base_channels", c.ldm.base_channels},
        {"time_dim", c.ldm.time_dim},
        {"steps", c.ldm.steps},
        {"beta_start", c.ldm.beta_start},
        {"beta_end", c.ldm.beta_end},
        {"epochs", c.ldm.epochs},
        {"batch", c.ldm.batch},
        {"lr", c.ldm.lr},
        {"tuning", c.ldm.tuning},
        {"loss",
         {{"lambda", c.ldm.loss.lambda},
          {"weight_base", c.ldm.loss.weight_base},
          {"weight_scale", c.ldm.loss.weight_scale},
          {"cond_dropout_p", c.ldm.loss.cond_dropout_p},
          {"force_aux", c.ldm.loss.force_aux}}}}},
      {"generation",
       {{"g", c.generation.g},
        {"steps", c.generation.steps},
        {"thresholds", thresholds},
        {"max_attempt_factor", c.generation.max_attempt_factor},
        {"count_per_class", c.generation.count_per_class},
        {"filter", c.generation.filter}}},
      {"eval",
       {{"shrinkage", c.eval.shrinkage},
        {"clips_per_class", c.eval.clips_per_class},
        {"embedder_seed_offset", c.eval.embedder_seed_offset},
        {"embedder_epochs", c.eval.embedder_epochs}}},
      {"sweep", {{"lambdas", c.sweep.lambdas}, {"epochs", c.sweep.epochs}}}};
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void from_json(const json& j, ExperimentConfig& c) {
  get_if(j, "preset", c.preset);
  get_if(j, "seed", c.seed);
  if (j.contains("dsp")) {
    const json& d = j.at("dsp");
    get_if(d, "sample_rate", c.dsp.sample_rate);
    get_if(d, "window_length", c.dsp.window_length);
    get_if(d, "hop", c.dsp.hop);
    get_if(d, "mel_bins", c.dsp.mel_bins);
    get_if(d, "fmin", c.dsp.fmin);
    get_if(d, "fmax", c.dsp.fmax);
    get_if(d, "log_floor", c.dsp.log_floor);
    get_if(d, "clip_seconds", c.dsp.clip_seconds);
    get_if(d, "griffin_lim_iters", c.dsp.griffin_lim_iters);
  }
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    get_if(d, "classes", c.dataset.classes);
    get_if(d, "per_class", c.dataset.per_class);
    get_if(d, "clip_seconds", c.dataset.clip_seconds);
  }
  if (j.contains("clap")) {
    const json& d = j.at("clap");
    get_if(d, "embed_dim", c.clap.embed_dim);
    get_if(d, "label_embed_dim", c.clap.label_embed_dim);
    get_if(d, "channels", c.clap.channels);
    get_if(d, "temperature_init", c.clap.temperature_init);
    get_if(d, "tuning_enabled", c.clap.tuning_enabled);
    get_if(d, "epochs", c.clap.epochs);
    get_if(d, "batch", c.clap.batch);
    get_if(d, "lr", c.clap.lr);
  }
  if (j.contains("vae")) {
    const json& d = j.at("vae");
    get_if(d, "latent_channels", c.vae.latent_channels);
    get_if(d, "ratio", c.vae.ratio);
    get_if(d, "kl_weight", c.vae.kl_weight);
    get_if(d, "channels", c.vae.channels);
    get_if(d, "epochs", c.vae.epochs);
    get_if(d, "batch", c.vae.batch);
    get_if(d, "lr", c.vae.lr);
  }
  if (j.contains("latent_clap")) {
    const json& d = j.at("latent_clap");
    get_if(d, "channels", c.latent_clap.channels);
    get_if(d, "epochs", c.latent_clap.epochs);
    get_if(d, "batch", c.latent_clap.batch);
    get_if(d, "lr", c.latent_clap.lr);
  }
  if (j.contains("ldm")) {
    const json& d = j.at("ldm");
    get_if(d, "base_channels", c.ldm.base_channels);
    get_if(d, "time_dim", c.ldm.time_dim);
    get_if(d, "steps", c.ldm.steps);
    get_if(d, "beta_start", c.ldm.beta_start);
    get_if(d, "beta_end", c.ldm.beta_end);
    get_if(d, "epochs", c.ldm.epochs);
    get_if(d, "batch", c.ldm.batch);
    get_if(d, "lr", c.ldm.lr);
    get_if(d, "tuning", c.ldm.tuning);
    if (d.contains("loss")) {
      const json& l = d.at("loss");
      get_if(l, "lambda", c.ldm.loss.lambda);
      get_if(l, "weight_base", c.ldm.loss.weight_base);
      get_if(l, "weight_scale", c.ldm.loss.weight_scale);
      get_if(l, "cond_dropout_p", c.ldm.loss.cond_dropout_p);
      get_if(l, "force_aux", c.ldm.loss.force_aux);
    }
  }
  if (j.contains("generation")) {
    const json& d = j.at("generation");
    get_if(d, "g", c.generation.g);
    get_if(d, "steps", c.generation.steps);
    if (d.contains("thresholds"))
      for (auto& [k, v] : d.at("thresholds").items())
        c.generation.thresholds[k] = v.get<double>();
    get_if(d, "max_attempt_factor", c.generation.max_attempt_factor);
    get_if(d, "count_per_class", c.generation.count_per_class);
    get_if(d, "filter", c.generation.filter);
  }
  if (j.contains("eval")) {
    const json& d = j.at("eval");
    get_if(d, "shrinkage", c.eval.shrinkage);
    get_if(d, "clips_per_class", c.eval.clips_per_class);
    get_if(d, "embedder_seed_offset", c.eval.embedder_seed_offset);
    get_if(d, "embedder_epochs", c.eval.embedder_epochs);
  }
  if (j.contains("sweep")) {
    const json& d = j.at("sweep");
    get_if(d, "lambdas", c.sweep.lambdas);
    get_if(d, "epochs", c.sweep.epochs);
  }
}

json parse_override_value(const std::string& s) {
  // Try JSON first (numbers, booleans, arrays); fall back to a string.
  json v = json::parse(s, nullptr, false);
  if (!v.is_discarded()) return v;
  return json(s);
}

void apply_override(json& root, const std::string& kv) {
  auto eq = kv.find('=');
  if (eq == std::string::npos)
    throw std::invalid_argument("override must be key=value: " + kv);
  std::string path = kv.substr(0, eq);
  json value = parse_override_value(kv.substr(eq + 1));
  json* node = &root;
  size_t pos = 0;
  while (true) {
    size_t dot = path.find('.', pos);
    std::string key = path.substr(pos, dot == std::string::npos ? dot : dot - pos);
    if (key.empty()) throw std::invalid_argument("bad override path: " + path);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &((*node)[key]);
    pos = dot + 1;
  }
}

}  // namespace

ExperimentConfig preset_config(const std::string& name) {
  ExperimentConfig c;
  c.dataset.classes = default_class_labels();
  for (const auto& l : c.dataset.classes) c.generation.thresholds[l] = 0.2;
  c.generation.thresholds["keyboard"] = 0.15;
  c.generation.thresholds["motor_vehicle"] = 0.75;
  if (name == "desk") {
    c.preset = "desk";
    return c;
  }
  if (name == "paper") {
    c.preset = "paper";
    c.dsp.hop = 160;
    c.dsp.mel_bins = 64;
    c.dsp.griffin_lim_iters = 64;
    c.dataset.per_class = 600;
    c.clap.embed_dim = 512;
    c.clap.label_embed_dim = 64;
    c.clap.channels = {16, 32, 64, 128};
    c.clap.epochs = 40;
    c.vae.latent_channels = 8;
    c.vae.channels = {32, 64};
    c.vae.epochs = 40;
    c.latent_clap.epochs = 40;
    c.ldm.base_channels = 32;
    c.ldm.time_dim = 128;
    c.ldm.epochs = 500;
    c.ldm.lr = 3e-6;
    c.ldm.loss.lambda = 2000.0;
    c.generation.steps = 200;
    c.generation.count_per_class = 100;
    c.sweep.lambdas = {0.0, 1000.0, 2000.0};
    return c;
  }
  throw std::invalid_argument("unknown preset: " + name);
}

ExperimentConfig load_config(const std::string& file_path,
                             const std::vector<std::string>& overrides,
                             const std::string& default_preset) {
  json file_json = json::object();
  if (!file_path.empty()) {
    std::ifstream f(file_path);
    if (!f) throw std::runtime_error("config: cannot open " + file_path);
    f >> file_json;
  }
  std::string preset = default_preset;
  if (file_json.contains("preset")) preset = file_json.at("preset").get<std::string>();
  for (const auto& kv : overrides)
    if (kv.rfind("preset=", 0) == 0) preset = kv.substr(7);

  ExperimentConfig cfg = preset_config(preset);
  json merged = to_json(cfg);
  merged.merge_patch(file_json);
  for (const auto& kv : overrides) apply_override(merged, kv);
  ExperimentConfig out = preset_config(preset);
  from_json(merged, out);
  out.preset = preset;

  bool seed_given = merged.contains("seed") &&
                    (file_json.contains("seed") ||
                     std::any_of(overrides.begin(), overrides.end(), [](const auto& s) {
                       return s.rfind("seed=", 0) == 0;
                     }));
  if (!seed_given) {
    if (const char* env = std::getenv("FOLEY_SEED")) out.seed = std::strtoull(env, nullptr, 10);
  }
  return out;
}

std::string config_to_json(const ExperimentConfig& cfg) { return to_json(cfg).dump(2); }

std::string stage_config_hash(const ExperimentConfig& cfg, const std::string& stage) {
  json j = to_json(cfg);
  std::vector<std::string> sections;
  if (stage == "make-data")
    sections = {"dataset"};
  else if (stage == "train-clap")
    sections = {"dataset", "dsp", "clap"};
  else if (stage == "train-vae")
    sections = {"dataset", "dsp", "vae"};
  else if (stage == "train-latent-clap")
    sections = {"dataset", "dsp", "latent_clap"};
  else if (stage == "finetune-ldm")
    sections = {"dataset", "dsp", "ldm"};
  else
    throw std::invalid_argument("stage_config_hash: unknown stage " + stage);
  uint64_t h = fnv1a64(stage);
  h = fnv1a64(std::to_string(cfg.seed), h);
  h = fnv1a64(std::to_string(cfg.dsp.sample_rate), h);
  for (const auto& s : sections) h = fnv1a64(j.at(s).dump(), h);
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace foley
