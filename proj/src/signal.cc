// Copyright 2026 The DPCCN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dpccn/signal.h"

#include <cmath>
#include <complex>
#include <numbers>

#include <unsupported/Eigen/FFT>

#include "dpccn/error.h"

namespace dpccn {
namespace {

using Complex = std::complex<double>;

Eigen::FFT<double>& fft_engine() {
  // Plans are cached per thread; the engine itself is not thread safe.
  thread_local Eigen::FFT<double> engine;
  return engine;
}

std::vector<double> window_square_sum(std::size_t frames,
                                      const std::vector<double>& window,
                                      std::size_t hop) {
  const std::size_t n = window.size();
  std::vector<double> wss(n + (frames - 1) * hop, 0.0);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t i = 0; i < n; ++i) wss[t * hop + i] += window[i] * window[i];
  return wss;
}

void check_spectrogram(const ComplexSpectrogram& spec, const StftConfig& cfg) {
  DPCCN_CHECK_ARG(spec.bins == cfg.num_bins(),
                  "spectrogram has " + std::to_string(spec.bins) +
                      " bins, config expects " +
                      std::to_string(cfg.num_bins()));
  DPCCN_CHECK_ARG(spec.frames >= 1, "spectrogram has no frames");
  DPCCN_CHECK_ARG(spec.real.size() == spec.frames * spec.bins &&
                      spec.imag.size() == spec.frames * spec.bins,
                  "spectrogram planes do not match frames x bins");
}

}  // namespace

void validate_waveform(const Waveform& wave) {
  DPCCN_CHECK_ARG(!wave.samples.empty(), "empty waveform");
  DPCCN_CHECK_ARG(wave.sample_rate > 0, "sample rate must be positive");
  for (double v : wave.samples)
    DPCCN_CHECK_ARG(std::isfinite(v), "waveform contains non-finite samples");
}

void validate_stft_config(const StftConfig& cfg) {
  DPCCN_CHECK_ARG(cfg.fft_size >= 2 &&
                      (cfg.fft_size & (cfg.fft_size - 1)) == 0,
                  "fft_size must be a power of two");
  DPCCN_CHECK_ARG(cfg.hop_size > 0 && cfg.fft_size % cfg.hop_size == 0,
                  "hop_size must divide fft_size");
}

std::vector<double> sqrt_hann_window(std::size_t size) {
  DPCCN_CHECK_ARG(size >= 2 && size % 2 == 0,
                  "window size must be even and >= 2");
  std::vector<double> w(size);
  for (std::size_t n = 0; n < size; ++n) {
    double c = std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                        static_cast<double>(size));
    w[n] = std::sqrt(std::max(0.0, 0.5 * (1.0 - c)));
  }
  return w;
}

std::size_t num_frames(std::size_t length, const StftConfig& cfg) {
  return 1 + length / cfg.hop_size;
}

ComplexSpectrogram stft(std::span<const double> samples,
                        const StftConfig& cfg) {
  validate_stft_config(cfg);
  DPCCN_CHECK_ARG(!samples.empty(), "empty waveform");
  const std::size_t n = cfg.fft_size, pad = n / 2, len = samples.size();
  DPCCN_CHECK_ARG(len > pad, "waveform shorter than fft_size / 2 + 1 (" +
                                 std::to_string(pad + 1) +
                                 " samples) cannot be reflect-padded");
  std::vector<double> padded(len + 2 * pad);
  for (std::size_t i = 0; i < pad; ++i) padded[i] = samples[pad - i];
  for (std::size_t i = 0; i < len; ++i) padded[pad + i] = samples[i];
  for (std::size_t j = 0; j < pad; ++j) padded[pad + len + j] = samples[len - 2 - j];

  const auto window = sqrt_hann_window(n);
  ComplexSpectrogram spec;
  spec.frames = num_frames(len, cfg);
  spec.bins = cfg.num_bins();
  spec.original_length = len;
  spec.real.resize(spec.frames * spec.bins);
  spec.imag.resize(spec.frames * spec.bins);

  auto& engine = fft_engine();
  std::vector<double> frame(n);
  std::vector<Complex> out;
  for (std::size_t t = 0; t < spec.frames; ++t) {
    for (std::size_t i = 0; i < n; ++i)
      frame[i] = padded[t * cfg.hop_size + i] * window[i];
    engine.fwd(out, frame);
    for (std::size_t k = 0; k < spec.bins; ++k) {
      spec.real[t * spec.bins + k] = out[k].real();
      spec.imag[t * spec.bins + k] = out[k].imag();
    }
  }
  return spec;
}

ComplexSpectrogram stft(const Waveform& wave, const StftConfig& cfg) {
  DPCCN_CHECK_ARG(!wave.samples.empty(), "empty waveform");
  return stft(std::span<const double>(wave.samples), cfg);
}

std::vector<double> istft(const ComplexSpectrogram& spec,
                          const StftConfig& cfg) {
  validate_stft_config(cfg);
  check_spectrogram(spec, cfg);
  const std::size_t n = cfg.fft_size, pad = n / 2, bins = spec.bins;
  const auto window = sqrt_hann_window(n);
  const auto wss = window_square_sum(spec.frames, window, cfg.hop_size);
  std::vector<double> buffer(wss.size(), 0.0);

  auto& engine = fft_engine();
  std::vector<Complex> full(n);
  std::vector<double> frame;
  for (std::size_t t = 0; t < spec.frames; ++t) {
    for (std::size_t k = 0; k < bins; ++k)
      full[k] = Complex(spec.re(t, k), spec.im(t, k));
    full[0].imag(0.0);
    full[n / 2].imag(0.0);
    for (std::size_t k = 1; k < n / 2; ++k) full[n - k] = std::conj(full[k]);
    engine.inv(frame, full);
    for (std::size_t i = 0; i < n; ++i)
      buffer[t * cfg.hop_size + i] += window[i] * frame[i];
  }
  std::vector<double> out(spec.original_length, 0.0);
  for (std::size_t i = 0; i < out.size() && i + pad < buffer.size(); ++i) {
    double norm = wss[i + pad];
    out[i] = norm > 1e-11 ? buffer[i + pad] / norm : 0.0;
  }
  return out;
}

void istft_backward(std::span<const double> grad_samples, std::size_t frames,
                    const StftConfig& cfg, std::vector<double>* grad_real,
                    std::vector<double>* grad_imag) {
  validate_stft_config(cfg);
  const std::size_t n = cfg.fft_size, pad = n / 2, bins = cfg.num_bins();
  const auto window = sqrt_hann_window(n);
  const auto wss = window_square_sum(frames, window, cfg.hop_size);
  std::vector<double> grad_buffer(wss.size(), 0.0);
  for (std::size_t i = 0; i < grad_samples.size() && i + pad < wss.size(); ++i) {
    double norm = wss[i + pad];
    if (norm > 1e-11) grad_buffer[i + pad] = grad_samples[i] / norm;
  }
  grad_real->assign(frames * bins, 0.0);
  grad_imag->assign(frames * bins, 0.0);

  // The real inverse DFT weights interior bins twice; DC and Nyquist once and
  // their imaginary parts not at all.
  auto& engine = fft_engine();
  std::vector<double> frame(n);
  std::vector<Complex> spectrum;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < n; ++i)
      frame[i] = window[i] * grad_buffer[t * cfg.hop_size + i];
    engine.fwd(spectrum, frame);
    for (std::size_t k = 0; k < bins; ++k) {
      bool edge = (k == 0 || k == n / 2);
      double scale = (edge ? 1.0 : 2.0) * inv_n;
      (*grad_real)[t * bins + k] = scale * spectrum[k].real();
      (*grad_imag)[t * bins + k] = edge ? 0.0 : scale * spectrum[k].imag();
    }
  }
}

std::vector<double> magnitude(const ComplexSpectrogram& spec) {
  std::vector<double> mag(spec.real.size());
  for (std::size_t i = 0; i < mag.size(); ++i)
    mag[i] = std::hypot(spec.real[i], spec.imag[i]);
  return mag;
}

Tensor spectrogram_features(const ComplexSpectrogram& spec) {
  Tensor x({1, 2, spec.frames, spec.bins});
  std::copy(spec.real.begin(), spec.real.end(), x.data());
  std::copy(spec.imag.begin(), spec.imag.end(), x.data() + spec.real.size());
  return x;
}

MvnAccumulator::MvnAccumulator(std::size_t planes, std::size_t bins)
    : planes_(planes),
      bins_(bins),
      sum_(planes * bins, 0.0),
      sum_sq_(planes * bins, 0.0) {}

void MvnAccumulator::add(const Tensor& features) {
  DPCCN_CHECK_ARG(features.rank() == 4, "MVN features must be 4-D");
  if (planes_ == 0 && bins_ == 0) *this = MvnAccumulator(features.dim(1), features.dim(3));
  DPCCN_CHECK_ARG(features.dim(1) == planes_ && features.dim(3) == bins_,
                  "feature layout " + shape_string(features.shape()) +
                      " does not match accumulator");
  const std::size_t batch = features.dim(0), frames = features.dim(2);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t p = 0; p < planes_; ++p)
      for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t f = 0; f < bins_; ++f) {
          double v = features.at(b, p, t, f);
          sum_[p * bins_ + f] += v;
          sum_sq_[p * bins_ + f] += v * v;
        }
  count_ += batch * frames;
}

void MvnAccumulator::merge(const MvnAccumulator& other) {
  if (other.count_ == 0) return;
  if (count_ == 0 && planes_ == 0) {
    *this = other;
    return;
  }
  DPCCN_CHECK_ARG(other.planes_ == planes_ && other.bins_ == bins_,
                  "cannot merge accumulators with different layouts");
  for (std::size_t i = 0; i < sum_.size(); ++i) {
    sum_[i] += other.sum_[i];
    sum_sq_[i] += other.sum_sq_[i];
  }
  count_ += other.count_;
}

MvnStats MvnAccumulator::finalize() const {
  DPCCN_CHECK_ARG(count_ > 0, "MVN statistics need at least one frame");
  MvnStats stats;
  stats.planes = planes_;
  stats.bins = bins_;
  stats.mean.resize(sum_.size());
  stats.variance.resize(sum_.size());
  const double n = static_cast<double>(count_);
  for (std::size_t i = 0; i < sum_.size(); ++i) {
    double mean = sum_[i] / n;
    stats.mean[i] = mean;
    stats.variance[i] = std::max(sum_sq_[i] / n - mean * mean, kVarianceFloor);
  }
  return stats;
}

MvnStats compute_mvn(std::span<const Tensor> stream) {
  DPCCN_CHECK_ARG(!stream.empty(), "empty feature stream");
  MvnAccumulator acc;
  for (const auto& features : stream) acc.add(features);
  return acc.finalize();
}

namespace {

void check_layout(const Tensor& features, const MvnStats& stats) {
  DPCCN_CHECK_ARG(features.rank() == 4 && features.dim(1) == stats.planes &&
                      features.dim(3) == stats.bins,
                  "feature layout " + shape_string(features.shape()) +
                      " does not match MVN statistics");
}

}  // namespace

Tensor apply_mvn(const Tensor& features, const MvnStats& stats) {
  check_layout(features, stats);
  Tensor out(features.shape());
  const std::size_t batch = features.dim(0), frames = features.dim(2);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t p = 0; p < stats.planes; ++p)
      for (std::size_t f = 0; f < stats.bins; ++f) {
        double mean = stats.mean[p * stats.bins + f];
        double inv_std = 1.0 / std::sqrt(stats.variance[p * stats.bins + f]);
        for (std::size_t t = 0; t < frames; ++t)
          out.at(b, p, t, f) = (features.at(b, p, t, f) - mean) * inv_std;
      }
  return out;
}

Tensor invert_mvn(const Tensor& features, const MvnStats& stats) {
  check_layout(features, stats);
  Tensor out(features.shape());
  const std::size_t batch = features.dim(0), frames = features.dim(2);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t p = 0; p < stats.planes; ++p)
      for (std::size_t f = 0; f < stats.bins; ++f) {
        double mean = stats.mean[p * stats.bins + f];
        double std_dev = std::sqrt(stats.variance[p * stats.bins + f]);
        for (std::size_t t = 0; t < frames; ++t)
          out.at(b, p, t, f) = features.at(b, p, t, f) * std_dev + mean;
      }
  return out;
}

MvnStats identity_mvn(std::size_t planes, std::size_t bins) {
  MvnStats stats;
  stats.planes = planes;
  stats.bins = bins;
  stats.mean.assign(planes * bins, 0.0);
  stats.variance.assign(planes * bins, 1.0);
  return stats;
}

}  // namespace dpccn
