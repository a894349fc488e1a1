// Copyright (c) 2026 The foley-synth Authors
// SPDX-License-Identifier: Apache-2.0

#include "foley/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "foley/rng.hpp"

namespace foley {

namespace {

constexpr double kPi = std::numbers::pi;

// ---------------------------------------------------------------------------
// Radix-2 iterative FFT. Sizes are powers of two (window padded up).

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
  const size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0)
    throw std::logic_error("fft size must be a power of two");
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = 2.0 * kPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse) {
    double inv = 1.0 / static_cast<double>(n);
    for (auto& c : a) c *= inv;
  }
}

// ---------------------------------------------------------------------------
// Framing with reflection padding so that frames = len / hop.

struct StftPlan {
  int fft_size;
  int num_bins;
  std::vector<double> window;  // Hann, length = window_length
};

StftPlan make_plan(const MelConfig& cfg) {
  StftPlan p;
  p.fft_size = next_pow2(cfg.window_length);
  p.num_bins = p.fft_size / 2 + 1;
  p.window.resize(static_cast<size_t>(cfg.window_length));
  for (int i = 0; i < cfg.window_length; ++i)
    p.window[static_cast<size_t>(i)] =
        0.5 - 0.5 * std::cos(2.0 * kPi * i / cfg.window_length);
  return p;
}

double reflect_sample(const std::vector<double>& x, long long i) {
  long long n = static_cast<long long>(x.size());
  if (n == 1) return x[0];
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return x[static_cast<size_t>(i)];
}

}  // namespace

// ---------------------------------------------------------------------------
// WAV I/O.

namespace {

uint32_t read_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
uint16_t read_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace

Waveform load_wav(const std::string& path, int target_rate) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_wav: cannot open " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 44 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw std::runtime_error("load_wav: not a RIFF/WAVE file: " + path);

  size_t pos = 12;
  int channels = 0, rate = 0, bits = 0;
  const unsigned char* data_ptr = nullptr;
  size_t data_len = 0;
  while (pos + 8 <= buf.size()) {
    const unsigned char* hdr = buf.data() + pos;
    uint32_t chunk_len = read_u32(hdr + 4);
    const unsigned char* body = hdr + 8;
    if (pos + 8 + chunk_len > buf.size())
      throw std::runtime_error("load_wav: truncated chunk in " + path);
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (chunk_len < 16) throw std::runtime_error("load_wav: malformed fmt chunk");
      uint16_t format = read_u16(body);
      channels = read_u16(body + 2);
      rate = static_cast<int>(read_u32(body + 4));
      bits = read_u16(body + 14);
      if (format != 1 || bits != 16)
        throw std::runtime_error("load_wav: only 16-bit PCM supported: " + path);
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data_ptr = body;
      data_len = chunk_len;
    }
    pos += 8 + chunk_len + (chunk_len & 1);
  }
  if (channels <= 0 || rate <= 0 || !data_ptr)
    throw std::runtime_error("load_wav: missing fmt or data chunk: " + path);

  size_t frames = data_len / (2 * static_cast<size_t>(channels));
  if (frames == 0) throw std::runtime_error("load_wav: zero-length audio: " + path);

  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(frames);
  for (size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      const unsigned char* sp = data_ptr + 2 * (i * channels + c);
      int16_t s = static_cast<int16_t>(sp[0] | (sp[1] << 8));
      acc += static_cast<double>(s) / 32768.0;
    }
    w.samples[i] = acc / channels;
  }
  if (rate != target_rate) w = resample_linear(w, target_rate);
  return w;
}

void save_wav(const std::string& path, const Waveform& w) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_wav: cannot open " + path);
  uint32_t data_len = static_cast<uint32_t>(w.samples.size() * 2);
  uint32_t riff_len = 36 + data_len;
  auto put_u32 = [&](uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    f.write(reinterpret_cast<char*>(b), 4);
  };
  auto put_u16 = [&](uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff)};
    f.write(reinterpret_cast<char*>(b), 2);
  };
  f.write("RIFF", 4);
  put_u32(riff_len);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  put_u32(16);
  put_u16(1);  // PCM
  put_u16(1);  // mono
  put_u32(static_cast<uint32_t>(w.sample_rate));
  put_u32(static_cast<uint32_t>(w.sample_rate * 2));
  put_u16(2);
  put_u16(16);
  f.write("data", 4);
  put_u32(data_len);
  for (double s : w.samples) {
    double c = std::clamp(s, -1.0, 1.0);
    int16_t q = static_cast<int16_t>(std::lrint(c * 32767.0));
    put_u16(static_cast<uint16_t>(q));
  }
  if (!f) throw std::runtime_error("save_wav: write failed: " + path);
}

Waveform resample_linear(const Waveform& w, int target_rate) {
  if (w.sample_rate == target_rate) return w;
  if (w.samples.empty()) throw std::invalid_argument("resample: empty waveform");
  Waveform out;
  out.sample_rate = target_rate;
  long long n =
      static_cast<long long>(w.samples.size()) * target_rate / w.sample_rate;
  n = std::max<long long>(n, 1);
  out.samples.resize(static_cast<size_t>(n));
  double ratio = static_cast<double>(w.sample_rate) / target_rate;
  for (long long i = 0; i < n; ++i) {
    double t = i * ratio;
    long long i0 = static_cast<long long>(t);
    double frac = t - i0;
    long long i1 = std::min<long long>(i0 + 1, w.length() - 1);
    out.samples[static_cast<size_t>(i)] =
        (1.0 - frac) * w.samples[static_cast<size_t>(i0)] +
        frac * w.samples[static_cast<size_t>(i1)];
  }
  return out;
}

Waveform extend_clip(const Waveform& w, long long target_samples) {
  if (w.samples.empty()) throw std::invalid_argument("extend_clip: empty waveform");
  if (target_samples <= 0)
    throw std::invalid_argument("extend_clip: target must be positive");
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.resize(static_cast<size_t>(target_samples));
  size_t n = w.samples.size();
  for (long long i = 0; i < target_samples; ++i)
    out.samples[static_cast<size_t>(i)] = w.samples[static_cast<size_t>(i) % n];
  return out;
}

// ---------------------------------------------------------------------------
// Mel filterbank (HTK scale).

namespace {

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

/// Triangular filters, peak 1, on mel-spaced points over [fmin, fmax].
/// Returns a [mel_bins x num_bins] weight matrix.
Tensor mel_filterbank(const MelConfig& cfg, int fft_size, int num_bins) {
  if (cfg.mel_bins < 1) throw std::invalid_argument("mel_bins must be >= 1");
  if (!(cfg.fmin < cfg.fmax) || cfg.fmax > cfg.sample_rate / 2.0 + 1e-9)
    throw std::invalid_argument("mel filterbank frequency bounds invalid");
  Tensor fb({cfg.mel_bins, num_bins});
  double mlo = hz_to_mel(cfg.fmin), mhi = hz_to_mel(cfg.fmax);
  std::vector<double> pts(static_cast<size_t>(cfg.mel_bins) + 2);
  for (int i = 0; i < cfg.mel_bins + 2; ++i)
    pts[static_cast<size_t>(i)] =
        mel_to_hz(mlo + (mhi - mlo) * i / (cfg.mel_bins + 1));
  double bin_hz = static_cast<double>(cfg.sample_rate) / fft_size;
  for (int m = 0; m < cfg.mel_bins; ++m) {
    double fl = pts[static_cast<size_t>(m)], fc = pts[static_cast<size_t>(m) + 1],
           fr = pts[static_cast<size_t>(m) + 2];
    for (int k = 0; k < num_bins; ++k) {
      double f = k * bin_hz;
      double wgt = 0.0;
      if (f > fl && f < fc)
        wgt = (f - fl) / (fc - fl);
      else if (f >= fc && f < fr)
        wgt = (fr - f) / (fr - fc);
      fb.at2(m, k) = wgt;
    }
  }
  return fb;
}

/// Power spectrogram [num_bins x frames] of a hop-multiple-length waveform.
Tensor power_spectrogram(const Waveform& w, const MelConfig& cfg,
                         const StftPlan& plan) {
  long long len = w.length();
  if (len % cfg.hop != 0)
    throw std::invalid_argument("mel_spectrogram: length must be a hop multiple");
  if (len < cfg.window_length / 2)
    throw std::invalid_argument("mel_spectrogram: waveform shorter than half window");
  int frames = static_cast<int>(len / cfg.hop);
  Tensor spec({plan.num_bins, frames});
  std::vector<std::complex<double>> buf(static_cast<size_t>(plan.fft_size));
  int half = cfg.window_length / 2;
  for (int t = 0; t < frames; ++t) {
    long long center = static_cast<long long>(t) * cfg.hop;
    for (int i = 0; i < plan.fft_size; ++i) buf[static_cast<size_t>(i)] = 0.0;
    for (int i = 0; i < cfg.window_length; ++i) {
      double s = reflect_sample(w.samples, center - half + i);
      buf[static_cast<size_t>(i)] = s * plan.window[static_cast<size_t>(i)];
    }
    fft_inplace(buf, false);
    for (int k = 0; k < plan.num_bins; ++k)
      spec.at2(k, t) = std::norm(buf[static_cast<size_t>(k)]);
  }
  return spec;
}

}  // namespace

std::vector<double> mel_filter_centers(const MelConfig& cfg) {
  double mlo = hz_to_mel(cfg.fmin), mhi = hz_to_mel(cfg.fmax);
  std::vector<double> centers(static_cast<size_t>(cfg.mel_bins));
  for (int m = 0; m < cfg.mel_bins; ++m)
    centers[static_cast<size_t>(m)] =
        mel_to_hz(mlo + (mhi - mlo) * (m + 1) / (cfg.mel_bins + 1));
  return centers;
}

MelSpec mel_spectrogram(const Waveform& w, const MelConfig& cfg) {
  if (cfg.hop > cfg.window_length)
    throw std::invalid_argument("mel config: hop must not exceed window");
  StftPlan plan = make_plan(cfg);
  Tensor spec = power_spectrogram(w, cfg, plan);
  Tensor fb = mel_filterbank(cfg, plan.fft_size, plan.num_bins);
  int frames = spec.dims[1];
  MelSpec out;
  out.config = cfg;
  out.values = Tensor({cfg.mel_bins, frames});
  for (int m = 0; m < cfg.mel_bins; ++m)
    for (int t = 0; t < frames; ++t) {
      double acc = 0.0;
      for (int k = 0; k < plan.num_bins; ++k) acc += fb.at2(m, k) * spec.at2(k, t);
      out.values.at2(m, t) = std::log(std::max(acc, cfg.log_floor));
    }
  return out;
}

double mel_relative_error(const MelSpec& a, const MelSpec& b) {
  if (a.values.dims != b.values.dims)
    throw std::invalid_argument("mel_relative_error: shape mismatch");
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < a.values.v.size(); ++i) {
    double d = a.values.v[i] - b.values.v[i];
    num += d * d;
    den += a.values.v[i] * a.values.v[i];
  }
  return std::sqrt(num / std::max(den, 1e-300));
}

// ---------------------------------------------------------------------------
// Griffin-Lim with Mel pseudo-inverse magnitude estimation.

namespace {

/// Least-squares solve of (A A^T + eps I) x = b via Cholesky, A = filterbank.
/// Small system (mel_bins x mel_bins), done once per inversion.
std::vector<double> solve_spd(std::vector<std::vector<double>> a,
                              std::vector<double> b) {
  size_t n = b.size();
  // In-place Cholesky.
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j <= i; ++j) {
      double s = a[i][j];
      for (size_t k = 0; k < j; ++k) s -= a[i][k] * a[j][k];
      if (i == j)
        a[i][i] = std::sqrt(std::max(s, 1e-12));
      else
        a[i][j] = s / a[j][j];
    }
  }
  // Forward then backward substitution.
  for (size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (size_t k = 0; k < i; ++k) s -= a[i][k] * b[k];
    b[i] = s / a[i][i];
  }
  for (size_t ii = n; ii-- > 0;) {
    double s = b[ii];
    for (size_t k = ii + 1; k < n; ++k) s -= a[k][ii] * b[k];
    b[ii] = s / a[ii][ii];
  }
  return b;
}

void istft(const std::vector<std::vector<std::complex<double>>>& frames_fd,
           const MelConfig& cfg, const StftPlan& plan, std::vector<double>& out) {
  int frames = static_cast<int>(frames_fd.size());
  long long len = static_cast<long long>(frames) * cfg.hop;
  int half = cfg.window_length / 2;
  // Accumulator covers [-half, len + half); index shifted by +half.
  std::vector<double> acc(static_cast<size_t>(len + cfg.window_length), 0.0);
  std::vector<double> wsum(acc.size(), 0.0);
  std::vector<std::complex<double>> buf(static_cast<size_t>(plan.fft_size));
  for (int t = 0; t < frames; ++t) {
    for (int k = 0; k < plan.fft_size; ++k) buf[static_cast<size_t>(k)] = 0.0;
    for (int k = 0; k < plan.num_bins; ++k) {
      buf[static_cast<size_t>(k)] = frames_fd[static_cast<size_t>(t)][static_cast<size_t>(k)];
      if (k > 0 && k < plan.fft_size - k)
        buf[static_cast<size_t>(plan.fft_size - k)] =
            std::conj(frames_fd[static_cast<size_t>(t)][static_cast<size_t>(k)]);
    }
    fft_inplace(buf, true);
    long long start = static_cast<long long>(t) * cfg.hop;  // frame center
    for (int i = 0; i < cfg.window_length; ++i) {
      double wv = plan.window[static_cast<size_t>(i)];
      size_t j = static_cast<size_t>(start - half + i + half);
      acc[j] += buf[static_cast<size_t>(i)].real() * wv;
      wsum[j] += wv * wv;
    }
  }
  out.assign(static_cast<size_t>(len), 0.0);
  for (long long i = 0; i < len; ++i) {
    size_t j = static_cast<size_t>(i + half);
    out[static_cast<size_t>(i)] = wsum[j] > 1e-10 ? acc[j] / wsum[j] : 0.0;
  }
}

}  // namespace

GriffinLimResult griffin_lim(const MelSpec& m, int iterations, uint64_t seed) {
  if (iterations < 1) throw std::invalid_argument("griffin_lim: iterations >= 1");
  const MelConfig& cfg = m.config;
  StftPlan plan = make_plan(cfg);
  int frames = m.frames();
  int bins = plan.num_bins;

  // Magnitude target from the Mel pseudo-inverse. The log floor is treated
  // as the zero level so silent grids invert to silence.
  Tensor fb = mel_filterbank(cfg, plan.fft_size, bins);
  std::vector<std::vector<double>> gram(static_cast<size_t>(cfg.mel_bins),
                                        std::vector<double>(static_cast<size_t>(cfg.mel_bins), 0.0));
  for (int i = 0; i < cfg.mel_bins; ++i)
    for (int j = 0; j < cfg.mel_bins; ++j) {
      double s = 0.0;
      for (int k = 0; k < bins; ++k) s += fb.at2(i, k) * fb.at2(j, k);
      gram[static_cast<size_t>(i)][static_cast<size_t>(j)] = s + (i == j ? 1e-8 : 0.0);
    }

  std::vector<std::vector<double>> target_mag(
      static_cast<size_t>(frames), std::vector<double>(static_cast<size_t>(bins), 0.0));
  for (int t = 0; t < frames; ++t) {
    std::vector<double> melpow(static_cast<size_t>(cfg.mel_bins));
    for (int b = 0; b < cfg.mel_bins; ++b)
      melpow[static_cast<size_t>(b)] =
          std::max(std::exp(m.values.at2(b, t)) - cfg.log_floor, 0.0);
    std::vector<double> coef = solve_spd(gram, melpow);
    for (int k = 0; k < bins; ++k) {
      double p = 0.0;
      for (int b = 0; b < cfg.mel_bins; ++b)
        p += coef[static_cast<size_t>(b)] * fb.at2(b, k);
      target_mag[static_cast<size_t>(t)][static_cast<size_t>(k)] =
          std::sqrt(std::max(p, 0.0));
    }
  }

  // Random initial phase, then alternate ISTFT/STFT projections.
  Rng rng(mix_seed(seed, "griffin_lim"));
  std::vector<std::vector<std::complex<double>>> fd(
      static_cast<size_t>(frames),
      std::vector<std::complex<double>>(static_cast<size_t>(bins)));
  for (int t = 0; t < frames; ++t)
    for (int k = 0; k < bins; ++k) {
      double ph = rng.uniform(0.0, 2.0 * kPi);
      fd[static_cast<size_t>(t)][static_cast<size_t>(k)] =
          std::polar(target_mag[static_cast<size_t>(t)][static_cast<size_t>(k)], ph);
    }

  Waveform cur;
  cur.sample_rate = cfg.sample_rate;
  GriffinLimResult result;
  double best_err = std::numeric_limits<double>::infinity();
  std::vector<std::complex<double>> buf(static_cast<size_t>(plan.fft_size));
  int half = cfg.window_length / 2;

  for (int it = 0; it < iterations; ++it) {
    istft(fd, cfg, plan, cur.samples);
    // Re-analyze and snap magnitudes back to the target.
    for (int t = 0; t < frames; ++t) {
      long long center = static_cast<long long>(t) * cfg.hop;
      for (int i = 0; i < plan.fft_size; ++i) buf[static_cast<size_t>(i)] = 0.0;
      for (int i = 0; i < cfg.window_length; ++i) {
        double s = reflect_sample(cur.samples, center - half + i);
        buf[static_cast<size_t>(i)] = s * plan.window[static_cast<size_t>(i)];
      }
      fft_inplace(buf, false);
      for (int k = 0; k < bins; ++k) {
        std::complex<double> c = buf[static_cast<size_t>(k)];
        double mag = std::abs(c);
        std::complex<double> ph = mag > 1e-14 ? c / mag : std::complex<double>(1.0, 0.0);
        fd[static_cast<size_t>(t)][static_cast<size_t>(k)] =
            ph * target_mag[static_cast<size_t>(t)][static_cast<size_t>(k)];
      }
    }
    MelSpec re = mel_spectrogram(cur, cfg);
    double err = mel_relative_error(m, re);
    if (err < best_err) {
      best_err = err;
      result.audio = cur;
    }
    result.error_trace.push_back(best_err);
  }
  return result;
}

}  // namespace foley
