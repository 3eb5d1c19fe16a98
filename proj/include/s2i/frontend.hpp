// Copyright 2026 The s2i Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "s2i/tensor.hpp"
#include "s2i/wav.hpp"

namespace s2i {

// 12 cepstra + log energy, with first and second derivatives appended by
// add_deltas for the standard 39-dimensional vectors.
struct FrontendConfig {
  double win_len_ms = 25.0;
  double win_shift_ms = 5.0;
  int n_mel = 40;
  int n_cepstra = 12;
  bool include_log_energy = true;
  int delta_order = 2;
  int fft_size = 512;
  double preemphasis = 0.97;
  bool cmvn = false;  // per-utterance cepstral mean/variance normalization

  int win_samples(int sample_rate) const {
    return static_cast<int>(std::lround(win_len_ms * sample_rate / 1000.0));
  }
  int shift_samples(int sample_rate) const {
    return static_cast<int>(std::lround(win_shift_ms * sample_rate / 1000.0));
  }
  int base_dims() const { return n_cepstra + (include_log_energy ? 1 : 0); }
  int output_dims() const { return base_dims() * (1 + delta_order); }

  void validate(int sample_rate) const {
    if (win_shift_ms <= 0 || win_len_ms <= 0 || win_shift_ms > win_len_ms)
      throw ValidationError("frontend: need 0 < win_shift <= win_len");
    if (n_mel < 2 || n_cepstra < 1 || n_cepstra > n_mel)
      throw ValidationError("frontend: bad filterbank/cepstra counts");
    if (fft_size < win_samples(sample_rate))
      throw ValidationError("frontend: fft_size smaller than the analysis window");
    if ((fft_size & (fft_size - 1)) != 0)
      throw ValidationError("frontend: fft_size must be a power of two");
    if (delta_order < 0 || delta_order > 2)
      throw ValidationError("frontend: delta order must be 0, 1 or 2");
  }
};

enum class FeatureKind { mfcc39, external };

struct FeatureMatrix {
  Tensor<float> data;  // [frames, dims]
  int n_valid_frames = 0;
  FeatureKind kind = FeatureKind::external;

  int frames() const { return data.rank() == 2 ? data.dim(0) : 0; }
  int dims() const { return data.rank() == 2 ? data.dim(1) : 0; }
};

constexpr double kLogFloor = 1e-10;

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

namespace detail {

// In-place iterative radix-2 FFT; size must be a power of two.
inline void fft_radix2(std::vector<double>& re, std::vector<double>& im) {
  const size_t n = re.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / static_cast<double>(len);
    const double wr = std::cos(ang), wi = std::sin(ang);
    for (size_t i = 0; i < n; i += len) {
      double cr = 1.0, ci = 0.0;
      for (size_t k = 0; k < len / 2; ++k) {
        const double ur = re[i + k], ui = im[i + k];
        const double vr = re[i + k + len / 2] * cr - im[i + k + len / 2] * ci;
        const double vi = re[i + k + len / 2] * ci + im[i + k + len / 2] * cr;
        re[i + k] = ur + vr;
        im[i + k] = ui + vi;
        re[i + k + len / 2] = ur - vr;
        im[i + k + len / 2] = ui - vi;
        const double ncr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = ncr;
      }
    }
  }
}

}  // namespace detail

// Triangular mel filterbank over the one-sided spectrum, [n_mel, fft/2+1].
// Filter edges are continuous in Hz (no bin snapping).
inline Tensor<double> mel_filterbank(const FrontendConfig& cfg, int sample_rate) {
  const int n_bins = cfg.fft_size / 2 + 1;
  const double mel_max = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(static_cast<size_t>(cfg.n_mel) + 2);
  for (int i = 0; i < cfg.n_mel + 2; ++i)
    edges[static_cast<size_t>(i)] = mel_to_hz(mel_max * i / (cfg.n_mel + 1));
  Tensor<double> fb({cfg.n_mel, n_bins});
  for (int m = 0; m < cfg.n_mel; ++m) {
    const double lo = edges[static_cast<size_t>(m)];
    const double mid = edges[static_cast<size_t>(m) + 1];
    const double hi = edges[static_cast<size_t>(m) + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / cfg.fft_size;
      double w = 0.0;
      if (f > lo && f < hi) w = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
      fb.at(m, k) = w;
    }
  }
  return fb;
}

inline std::vector<double> mel_center_frequencies(const FrontendConfig& cfg, int sample_rate) {
  const double mel_max = hz_to_mel(sample_rate / 2.0);
  std::vector<double> centers(static_cast<size_t>(cfg.n_mel));
  for (int m = 0; m < cfg.n_mel; ++m)
    centers[static_cast<size_t>(m)] = mel_to_hz(mel_max * (m + 1) / (cfg.n_mel + 1));
  return centers;
}

struct FrameSet {
  Tensor<double> windowed;          // [frames, win] pre-emphasized + Hamming
  std::vector<double> raw_energy;   // sum x^2 of the unprocessed frame
  int sample_rate = 0;
};

// frame count = floor((N - win) / shift) + 1
inline FrameSet frame_signal(const Waveform& w, const FrontendConfig& cfg) {
  cfg.validate(w.sample_rate);
  if (w.sample_rate <= 0) throw ValidationError("frame_signal: bad sample rate");
  const int win = cfg.win_samples(w.sample_rate);
  const int shift = cfg.shift_samples(w.sample_rate);
  const int n = static_cast<int>(w.samples.size());
  if (n < win)
    throw ValidationError("frame_signal: signal shorter than one analysis window");
  for (float s : w.samples)
    if (!std::isfinite(s)) throw ValidationError("frame_signal: non-finite sample");

  std::vector<double> emph(static_cast<size_t>(n));
  emph[0] = w.samples[0];
  for (int i = 1; i < n; ++i)
    emph[static_cast<size_t>(i)] = w.samples[static_cast<size_t>(i)] -
                                   cfg.preemphasis * w.samples[static_cast<size_t>(i) - 1];

  const int n_frames = (n - win) / shift + 1;
  FrameSet fs;
  fs.sample_rate = w.sample_rate;
  fs.windowed = Tensor<double>({n_frames, win});
  fs.raw_energy.resize(static_cast<size_t>(n_frames));
  std::vector<double> ham(static_cast<size_t>(win));
  for (int i = 0; i < win; ++i)
    ham[static_cast<size_t>(i)] = 0.54 - 0.46 * std::cos(2.0 * M_PI * i / (win - 1));
  for (int f = 0; f < n_frames; ++f) {
    const int off = f * shift;
    double e = 0.0;
    for (int i = 0; i < win; ++i) {
      const double raw = w.samples[static_cast<size_t>(off + i)];
      e += raw * raw;
      fs.windowed.at(f, i) = emph[static_cast<size_t>(off + i)] * ham[static_cast<size_t>(i)];
    }
    fs.raw_energy[static_cast<size_t>(f)] = e;
  }
  return fs;
}

// Per frame: power spectrum -> mel energies -> log -> DCT-II, keep
// coefficients 1..n_cepstra; dimension 0 is the raw-frame log energy.
inline Tensor<double> mfcc(const FrameSet& fs, const FrontendConfig& cfg) {
  const int n_frames = fs.windowed.dim(0);
  const int win = fs.windowed.dim(1);
  const int n_bins = cfg.fft_size / 2 + 1;
  const Tensor<double> fb = mel_filterbank(cfg, fs.sample_rate);
  const int dims = cfg.base_dims();
  Tensor<double> out({n_frames, dims});

  // DCT-II basis, rows 1..n_cepstra, orthonormal scaling sqrt(2/M)
  Tensor<double> dct({cfg.n_cepstra, cfg.n_mel});
  for (int i = 0; i < cfg.n_cepstra; ++i)
    for (int m = 0; m < cfg.n_mel; ++m)
      dct.at(i, m) = std::sqrt(2.0 / cfg.n_mel) *
                     std::cos(M_PI * (i + 1) * (m + 0.5) / cfg.n_mel);

  std::vector<double> re(static_cast<size_t>(cfg.fft_size));
  std::vector<double> im(static_cast<size_t>(cfg.fft_size));
  std::vector<double> logmel(static_cast<size_t>(cfg.n_mel));
  for (int f = 0; f < n_frames; ++f) {
    std::fill(re.begin(), re.end(), 0.0);
    std::fill(im.begin(), im.end(), 0.0);
    for (int i = 0; i < win; ++i) re[static_cast<size_t>(i)] = fs.windowed.at(f, i);
    detail::fft_radix2(re, im);
    for (int m = 0; m < cfg.n_mel; ++m) {
      double acc = 0.0;
      for (int k = 0; k < n_bins; ++k) {
        const double p = re[static_cast<size_t>(k)] * re[static_cast<size_t>(k)] +
                         im[static_cast<size_t>(k)] * im[static_cast<size_t>(k)];
        acc += fb.at(m, k) * p;
      }
      logmel[static_cast<size_t>(m)] = std::log(std::max(acc, kLogFloor));
    }
    int col = 0;
    if (cfg.include_log_energy)
      out.at(f, col++) = std::log(std::max(fs.raw_energy[static_cast<size_t>(f)], kLogFloor));
    for (int i = 0; i < cfg.n_cepstra; ++i) {
      double acc = 0.0;
      for (int m = 0; m < cfg.n_mel; ++m) acc += dct.at(i, m) * logmel[static_cast<size_t>(m)];
      out.at(f, col++) = acc;
    }
  }
  return out;
}

// Delta regression over +-2 frames with edge replication; applied once for
// the first derivative and again on the result for the second.
inline Tensor<double> delta_pass(const Tensor<double>& x) {
  const int n = x.dim(0), d = x.dim(1);
  if (n < 1) throw ValidationError("delta: need at least one frame");
  Tensor<double> out({n, d});
  auto clampi = [n](int t) { return std::min(std::max(t, 0), n - 1); };
  const double denom = 2.0 * (1.0 * 1.0 + 2.0 * 2.0);
  for (int t = 0; t < n; ++t)
    for (int j = 0; j < d; ++j) {
      double acc = 0.0;
      for (int k = 1; k <= 2; ++k)
        acc += k * (x.at(clampi(t + k), j) - x.at(clampi(t - k), j));
      out.at(t, j) = acc / denom;
    }
  return out;
}

inline Tensor<double> add_deltas(const Tensor<double>& base, int delta_order) {
  if (base.dim(0) < 1) throw ValidationError("add_deltas: need at least one frame");
  const int n = base.dim(0), d = base.dim(1);
  Tensor<double> out({n, d * (1 + delta_order)});
  for (int t = 0; t < n; ++t)
    for (int j = 0; j < d; ++j) out.at(t, j) = base.at(t, j);
  Tensor<double> cur = base;
  for (int o = 1; o <= delta_order; ++o) {
    cur = delta_pass(cur);
    for (int t = 0; t < n; ++t)
      for (int j = 0; j < d; ++j) out.at(t, o * d + j) = cur.at(t, j);
  }
  return out;
}

inline FeatureMatrix extract_features(const Waveform& w, const FrontendConfig& cfg) {
  const FrameSet fs = frame_signal(w, cfg);
  Tensor<double> feats = add_deltas(mfcc(fs, cfg), cfg.delta_order);
  if (cfg.cmvn) {
    const int n = feats.dim(0), d = feats.dim(1);
    for (int j = 0; j < d; ++j) {
      double mean = 0.0;
      for (int t = 0; t < n; ++t) mean += feats.at(t, j);
      mean /= n;
      double var = 0.0;
      for (int t = 0; t < n; ++t) {
        const double c = feats.at(t, j) - mean;
        var += c * c;
      }
      const double inv_std = 1.0 / std::sqrt(var / n + 1e-12);
      for (int t = 0; t < n; ++t) feats.at(t, j) = (feats.at(t, j) - mean) * inv_std;
    }
  }
  FeatureMatrix fm;
  fm.data = feats.cast<float>();
  fm.n_valid_frames = feats.dim(0);
  fm.kind = cfg.output_dims() == 39 ? FeatureKind::mfcc39 : FeatureKind::external;
  if (!fm.data.all_finite()) throw std::runtime_error("extract_features: non-finite output");
  return fm;
}

}  // namespace s2i
