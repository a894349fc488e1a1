// Copyright (c) 2026 The foley-synth Authors
// SPDX-License-Identifier: Apache-2.0

#include "foley/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "foley/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace foley {

namespace {

constexpr double kPi = std::numbers::pi;

/// RBJ biquad, direct form 1. Enough filtering for parametric sound classes.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;

  static Biquad bandpass(double fc, double q, double sr) {
    Biquad f;
    double w0 = 2.0 * kPi * fc / sr, alpha = std::sin(w0) / (2.0 * q);
    double a0 = 1.0 + alpha;
    f.b0 = alpha / a0;
    f.b1 = 0.0;
    f.b2 = -alpha / a0;
    f.a1 = -2.0 * std::cos(w0) / a0;
    f.a2 = (1.0 - alpha) / a0;
    return f;
  }
  static Biquad lowpass(double fc, double q, double sr) {
    Biquad f;
    double w0 = 2.0 * kPi * fc / sr, alpha = std::sin(w0) / (2.0 * q);
    double c = std::cos(w0), a0 = 1.0 + alpha;
    f.b0 = (1.0 - c) / 2.0 / a0;
    f.b1 = (1.0 - c) / a0;
    f.b2 = (1.0 - c) / 2.0 / a0;
    f.a1 = -2.0 * c / a0;
    f.a2 = (1.0 - alpha) / a0;
    return f;
  }
  static Biquad highpass(double fc, double q, double sr) {
    Biquad f;
    double w0 = 2.0 * kPi * fc / sr, alpha = std::sin(w0) / (2.0 * q);
    double c = std::cos(w0), a0 = 1.0 + alpha;
    f.b0 = (1.0 + c) / 2.0 / a0;
    f.b1 = -(1.0 + c) / a0;
    f.b2 = (1.0 + c) / 2.0 / a0;
    f.a1 = -2.0 * c / a0;
    f.a2 = (1.0 - alpha) / a0;
    return f;
  }

  double tick(double x) {
    double y = b0 * x + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = x;
    y2 = y1;
    y1 = y;
    return y;
  }
};

void filter_inplace(std::vector<double>& x, Biquad f) {
  for (double& s : x) s = f.tick(s);
}

std::vector<double> white_noise(size_t n, Rng& rng) {
  std::vector<double> x(n);
  for (double& s : x) s = rng.uniform(-1.0, 1.0);
  return x;
}

void add_burst(std::vector<double>& out, const std::vector<double>& burst,
               long long at) {
  for (size_t i = 0; i < burst.size(); ++i) {
    long long j = at + static_cast<long long>(i);
    if (j >= 0 && j < static_cast<long long>(out.size()))
      out[static_cast<size_t>(j)] += burst[i];
  }
}

void normalize_peak(std::vector<double>& x, double peak) {
  double mx = 0.0;
  for (double s : x) mx = std::max(mx, std::fabs(s));
  if (mx < 1e-12) return;
  double g = peak / mx;
  for (double& s : x) s *= g;
}

// Class generators. Each is a distinct parametric family; all parameters are
// jittered from the per-clip RNG.

std::vector<double> gen_dog_bark(size_t n, int sr, Rng& rng) {
  std::vector<double> out(n, 0.0);
  int barks = rng.uniform_int(2, 4);
  double t0 = rng.uniform(0.1, 0.4);
  for (int b = 0; b < barks; ++b) {
    double dur = rng.uniform(0.12, 0.22);
    size_t bn = static_cast<size_t>(dur * sr);
    auto burst = white_noise(bn, rng);
    double fc = rng.uniform(500.0, 1100.0);
    filter_inplace(burst, Biquad::bandpass(fc, 1.2, sr));
    double f0 = rng.uniform(90.0, 140.0);
    for (size_t i = 0; i < bn; ++i) {
      double t = static_cast<double>(i) / sr;
      double env = std::exp(-t * 18.0) * std::min(1.0, t * 400.0);
      double am = 0.6 + 0.4 * std::sin(2.0 * kPi * f0 * t);
      burst[i] *= env * am;
    }
    add_burst(out, burst, static_cast<long long>(t0 * sr));
    t0 += rng.uniform(0.35, 0.65);
  }
  return out;
}

std::vector<double> gen_footstep(size_t n, int sr, Rng& rng) {
  std::vector<double> out(n, 0.0);
  double rate = rng.uniform(1.6, 2.4);
  double period = 1.0 / rate;
  double t0 = rng.uniform(0.05, 0.3);
  while (t0 * sr < static_cast<double>(n)) {
    double dur = rng.uniform(0.06, 0.11);
    size_t bn = static_cast<size_t>(dur * sr);
    auto thump = white_noise(bn, rng);
    filter_inplace(thump, Biquad::lowpass(rng.uniform(120.0, 260.0), 0.9, sr));
    for (size_t i = 0; i < bn; ++i) {
      double t = static_cast<double>(i) / sr;
      thump[i] *= std::exp(-t * 45.0) * std::min(1.0, t * 900.0) * 3.0;
    }
    add_burst(out, thump, static_cast<long long>(t0 * sr));
    t0 += period * rng.uniform(0.92, 1.08);
  }
  return out;
}

std::vector<double> gen_gun_shot(size_t n, int sr, Rng& rng) {
  std::vector<double> out(n, 0.0);
  int shots = rng.uniform_int(1, 2);
  double t0 = rng.uniform(0.2, 0.8);
  for (int s = 0; s < shots; ++s) {
    size_t bn = static_cast<size_t>(0.5 * sr);
    auto bang = white_noise(bn, rng);
    for (size_t i = 0; i < bn; ++i) {
      double t = static_cast<double>(i) / sr;
      bang[i] *= std::exp(-t * rng.uniform(25.0, 40.0));
    }
    add_burst(out, bang, static_cast<long long>(t0 * sr));
    // echo
    double echo_at = t0 + rng.uniform(0.06, 0.12);
    std::vector<double> echo(bn);
    for (size_t i = 0; i < bn; ++i) echo[i] = bang[i] * 0.3;
    filter_inplace(echo, Biquad::lowpass(1500.0, 0.8, sr));
    add_burst(out, echo, static_cast<long long>(echo_at * sr));
    t0 += rng.uniform(1.0, 1.8);
  }
  return out;
}

std::vector<double> gen_keyboard(size_t n, int sr, Rng& rng) {
  std::vector<double> out(n, 0.0);
  double t0 = rng.uniform(0.02, 0.2);
  double rate = rng.uniform(4.0, 9.0);
  while (t0 * sr < static_cast<double>(n)) {
    size_t bn = static_cast<size_t>(rng.uniform(0.004, 0.010) * sr) + 8;
    auto click = white_noise(bn, rng);
    filter_inplace(click, Biquad::bandpass(rng.uniform(3000.0, 6500.0), 2.0, sr));
    for (size_t i = 0; i < bn; ++i) {
      double t = static_cast<double>(i) / sr;
      click[i] *= std::exp(-t * 600.0) * 4.0;
    }
    add_burst(out, click, static_cast<long long>(t0 * sr));
    t0 += rng.uniform(0.6, 1.4) / rate;
  }
  return out;
}

std::vector<double> gen_motor_vehicle(size_t n, int sr, Rng& rng) {
  std::vector<double> out(n, 0.0);
  double f0 = rng.uniform(70.0, 110.0);
  int harmonics = rng.uniform_int(5, 8);
  std::vector<double> amps(static_cast<size_t>(harmonics));
  for (auto& a : amps) a = rng.uniform(0.2, 1.0);
  double vib_rate = rng.uniform(0.8, 2.5), vib_depth = rng.uniform(0.01, 0.04);
  double phase = rng.uniform(0.0, 2.0 * kPi);
  for (size_t i = 0; i < n; ++i) {
    double t = static_cast<double>(i) / sr;
    double f = f0 * (1.0 + vib_depth * std::sin(2.0 * kPi * vib_rate * t));
    phase += 2.0 * kPi * f / sr;
    double s = 0.0;
    for (int h = 0; h < harmonics; ++h)
      s += amps[static_cast<size_t>(h)] * std::sin((h + 1) * phase) / (h + 1);
    out[i] = s;
  }
  auto rumble = white_noise(n, rng);
  filter_inplace(rumble, Biquad::lowpass(300.0, 0.7, sr));
  for (size_t i = 0; i < n; ++i) out[i] = 0.8 * out[i] + 0.25 * rumble[i];
  return out;
}

std::vector<double> gen_rain(size_t n, int sr, Rng& rng) {
  auto out = white_noise(n, rng);
  filter_inplace(out, Biquad::highpass(rng.uniform(1200.0, 2000.0), 0.7, sr));
  // sparse droplet accents
  int drops = static_cast<int>(static_cast<double>(n) / sr * rng.uniform(20.0, 40.0));
  for (int d = 0; d < drops; ++d) {
    long long at = static_cast<long long>(rng.uniform() * static_cast<double>(n));
    size_t bn = static_cast<size_t>(0.003 * sr) + 4;
    auto drop = white_noise(bn, rng);
    filter_inplace(drop, Biquad::bandpass(rng.uniform(4000.0, 7000.0), 3.0, sr));
    for (size_t i = 0; i < bn; ++i) drop[i] *= std::exp(-static_cast<double>(i) / sr * 900.0) * 1.5;
    add_burst(out, drop, at);
  }
  return out;
}

std::vector<double> gen_sneeze_cough(size_t n, int sr, Rng& rng) {
  std::vector<double> out(n, 0.0);
  double t0 = rng.uniform(0.3, 1.0);
  double dur = rng.uniform(0.3, 0.55);
  size_t bn = static_cast<size_t>(dur * sr);
  auto gust = white_noise(bn, rng);
  double fhi = rng.uniform(1800.0, 2600.0), flo = rng.uniform(300.0, 500.0);
  Biquad sweep = Biquad::bandpass(fhi, 1.0, sr);
  for (size_t i = 0; i < bn; ++i) {
    double frac = static_cast<double>(i) / static_cast<double>(bn);
    if (i % 64 == 0) sweep = Biquad::bandpass(fhi + (flo - fhi) * frac, 1.0, sr);
    gust[i] = sweep.tick(gust[i]);
    double env = std::exp(-frac * 4.0) * std::min(1.0, frac * 30.0);
    gust[i] *= env * 2.0;
  }
  add_burst(out, gust, static_cast<long long>(t0 * sr));
  return out;
}

}  // namespace

const std::vector<std::string>& default_class_labels() {
  static const std::vector<std::string> labels = {
      "dog_bark", "footstep",      "gun_shot", "keyboard",
      "motor_vehicle", "rain", "sneeze_cough"};
  return labels;
}

std::string prompt_of(const std::string& label,
                      const std::vector<std::string>& labels) {
  if (label_index(label, labels) < 0)
    throw std::invalid_argument("prompt_of: unknown label " + label);
  std::string spoken = label;
  std::replace(spoken.begin(), spoken.end(), '_', ' ');
  return "This is a sound of " + spoken;
}

std::optional<std::string> label_from_prompt(const std::string& prompt,
                                             const std::vector<std::string>& labels) {
  for (const auto& l : labels)
    if (prompt == prompt_of(l, labels)) return l;
  return std::nullopt;
}

int label_index(const std::string& label, const std::vector<std::string>& labels) {
  for (size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == label) return static_cast<int>(i);
  return -1;
}

Waveform synthesize_class_clip(const std::string& label, uint64_t seed,
                               double duration_s, int sample_rate) {
  if (duration_s <= 0.0)
    throw std::invalid_argument("synthesize_class_clip: duration must be positive");
  size_t n = static_cast<size_t>(duration_s * sample_rate);
  Rng rng(mix_seed(seed, "clip:" + label));
  std::vector<double> x;
  if (label == "dog_bark")
    x = gen_dog_bark(n, sample_rate, rng);
  else if (label == "footstep")
    x = gen_footstep(n, sample_rate, rng);
  else if (label == "gun_shot")
    x = gen_gun_shot(n, sample_rate, rng);
  else if (label == "keyboard")
    x = gen_keyboard(n, sample_rate, rng);
  else if (label == "motor_vehicle")
    x = gen_motor_vehicle(n, sample_rate, rng);
  else if (label == "rain")
    x = gen_rain(n, sample_rate, rng);
  else if (label == "sneeze_cough")
    x = gen_sneeze_cough(n, sample_rate, rng);
  else
    throw std::invalid_argument("synthesize_class_clip: unknown label " + label);
  normalize_peak(x, rng.uniform(0.6, 0.9));
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples = std::move(x);
  return w;
}

Manifest build_corpus(const std::vector<std::string>& classes, int per_class,
                      uint64_t seed, const std::string& out_dir,
                      double clip_seconds, int sample_rate) {
  if (per_class <= 0) throw std::invalid_argument("build_corpus: per_class must be positive");
  if (classes.size() < 2) throw std::invalid_argument("build_corpus: need at least 2 classes");
  fs::create_directories(out_dir);
  Manifest m;
  m.root = out_dir;
  for (size_t ci = 0; ci < classes.size(); ++ci) {
    const std::string& label = classes[ci];
    fs::create_directories(fs::path(out_dir) / label);
    for (int i = 0; i < per_class; ++i) {
      uint64_t clip_seed = mix_seed(seed, label, static_cast<uint64_t>(i));
      Waveform w = synthesize_class_clip(label, clip_seed, clip_seconds, sample_rate);
      char name[32];
      std::snprintf(name, sizeof(name), "%04d.wav", i);
      std::string rel = label + "/" + name;
      save_wav(out_dir + "/" + rel, w);
      m.entries.push_back({rel, label, clip_seconds});
    }
  }
  save_manifest(m, out_dir + "/manifest.jsonl");
  return m;
}

void save_manifest(const Manifest& m, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_manifest: cannot open " + path);
  for (const auto& e : m.entries) {
    json j = {{"path", e.path}, {"label", e.label}, {"duration_s", e.duration_s}};
    f << j.dump() << "\n";
  }
}

Manifest load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_manifest: cannot open " + path);
  Manifest m;
  m.root = fs::path(path).parent_path().string();
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    m.entries.push_back({j.at("path").get<std::string>(),
                         j.at("label").get<std::string>(),
                         j.at("duration_s").get<double>()});
  }
  return m;
}

void validate_manifest(const Manifest& m, const std::vector<std::string>& classes) {
  std::set<std::string> seen;
  for (const auto& e : m.entries) {
    if (label_index(e.label, classes) < 0)
      throw std::runtime_error("manifest: unknown label " + e.label);
    if (!seen.insert(e.path).second)
      throw std::runtime_error("manifest: duplicate path " + e.path);
    if (!fs::exists(m.resolve(e)))
      throw std::runtime_error("manifest: missing file " + m.resolve(e));
  }
}

}  // namespace foley
