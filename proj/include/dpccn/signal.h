// Copyright 2026 The DPCCN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DPCCN_SIGNAL_H_
#define DPCCN_SIGNAL_H_

#include <cstddef>
#include <span>
#include <vector>

#include "dpccn/tensor.h"

namespace dpccn {

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 8000;

  std::size_t size() const { return samples.size(); }
};

// Throws InvalidArgument on empty samples, non-finite values or a
// non-positive sample rate.
void validate_waveform(const Waveform& wave);

struct StftConfig {
  std::size_t fft_size = 512;
  std::size_t hop_size = 128;

  std::size_t num_bins() const { return fft_size / 2 + 1; }
  bool operator==(const StftConfig&) const = default;
};

void validate_stft_config(const StftConfig& cfg);

// Frame-major (frames x bins) real and imaginary planes.
struct ComplexSpectrogram {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::size_t original_length = 0;
  std::vector<double> real;
  std::vector<double> imag;

  double re(std::size_t t, std::size_t f) const { return real[t * bins + f]; }
  double im(std::size_t t, std::size_t f) const { return imag[t * bins + f]; }
};

// Periodic square-root Hann window. size must be even and >= 2.
std::vector<double> sqrt_hann_window(std::size_t size);

// Number of frames produced for a signal of the given length. Signals are
// reflect-padded by fft_size / 2 on both ends before framing.
std::size_t num_frames(std::size_t length, const StftConfig& cfg);

ComplexSpectrogram stft(std::span<const double> samples, const StftConfig& cfg);
ComplexSpectrogram stft(const Waveform& wave, const StftConfig& cfg);

// Weighted overlap-add with the same window, normalized by the squared-window
// overlap sum; output has spec.original_length samples.
std::vector<double> istft(const ComplexSpectrogram& spec,
                          const StftConfig& cfg);

// Adjoint of istft: given d(loss)/d(output samples), returns the gradient with
// respect to the real and imaginary planes of the input spectrogram.
void istft_backward(std::span<const double> grad_samples,
                    std::size_t frames, const StftConfig& cfg,
                    std::vector<double>* grad_real,
                    std::vector<double>* grad_imag);

// Magnitude spectrum, frame-major.
std::vector<double> magnitude(const ComplexSpectrogram& spec);

// Network input layout (1, 2, frames, bins): plane 0 real, plane 1 imag.
Tensor spectrogram_features(const ComplexSpectrogram& spec);

inline constexpr double kVarianceFloor = 1e-8;

// Per-feature statistics over a (planes x bins) feature layout.
struct MvnStats {
  std::size_t planes = 2;
  std::size_t bins = 0;
  std::vector<double> mean;      // planes * bins
  std::vector<double> variance;  // planes * bins, floored

  bool empty() const { return mean.empty(); }
};

// Streaming count / sum / sum-of-squares accumulator. Partial accumulators
// from independent shards can be merged.
class MvnAccumulator {
 public:
  MvnAccumulator() = default;
  MvnAccumulator(std::size_t planes, std::size_t bins);

  // features: (1 or B, planes, frames, bins); every frame is one observation.
  void add(const Tensor& features);
  void merge(const MvnAccumulator& other);
  std::size_t count() const { return count_; }
  MvnStats finalize() const;

 private:
  std::size_t planes_ = 0;
  std::size_t bins_ = 0;
  std::size_t count_ = 0;
  std::vector<double> sum_;
  std::vector<double> sum_sq_;
};

// One streaming pass over a set of feature tensors.
MvnStats compute_mvn(std::span<const Tensor> stream);

// (x - mean) / sqrt(variance), per plane and bin.
Tensor apply_mvn(const Tensor& features, const MvnStats& stats);
Tensor invert_mvn(const Tensor& features, const MvnStats& stats);

// Identity statistics (mean 0, variance 1).
MvnStats identity_mvn(std::size_t planes, std::size_t bins);

}  // namespace dpccn

#endif  // DPCCN_SIGNAL_H_
