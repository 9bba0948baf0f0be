// Copyright 2026 The DPCCN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DPCCN_OPS_H_
#define DPCCN_OPS_H_

// Differentiable layer primitives on (batch, channels, frames, bins) maps.

#include <cstddef>
#include <vector>

#include "dpccn/autograd.h"
#include "dpccn/signal.h"

namespace dpccn::ops {

using ag::Var;

struct ConvGeometry {
  std::size_t kernel_t = 1, kernel_f = 1;
  std::size_t stride_t = 1, stride_f = 1;
  std::size_t pad_t = 0, pad_f = 0;
  std::size_t dilation_t = 1, dilation_f = 1;
};

std::size_t conv_output_size(std::size_t in, std::size_t kernel,
                             std::size_t stride, std::size_t pad,
                             std::size_t dilation);

// weight (out, in, kt, kf); bias (out).
Var conv2d(const Var& x, const Var& weight, const Var& bias,
           const ConvGeometry& geom);

// weight (in, out, kt, kf); bias (out). The output size is given explicitly
// and must be reachable by the geometry (a convolution with the same geometry
// maps it back to the input size).
Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias,
                     const ConvGeometry& geom, std::size_t out_t,
                     std::size_t out_f);

Var elu(const Var& x);
Var relu(const Var& x);

// Per (batch, channel) over frames x bins; gain/offset (channels).
Var instance_norm(const Var& x, const Var& gain, const Var& offset,
                  double eps = 1e-5);

// Per (batch, frame, bin) over channels; gain/offset (channels).
Var channel_layer_norm(const Var& x, const Var& gain, const Var& offset,
                       double eps = 1e-8);

Var concat_channels(const std::vector<Var>& xs);
Var add(const Var& a, const Var& b);
Var scale(const Var& x, double factor);
// Mean of equally shaped inputs.
Var mean_of(const std::vector<Var>& xs);

// x (B, C, T, F) * e (B, C, 1, F), broadcast over frames.
Var mul_broadcast_time(const Var& x, const Var& e);

// (B, C, T, F) -> (B, C * F, T, 1) with channel index c * F + f.
Var to_sequence(const Var& x);
// Inverse of to_sequence.
Var from_sequence(const Var& x, std::size_t channels, std::size_t bins);

// (B, C, T, F) -> (B, C, 1, F).
Var mean_time(const Var& x);

// Average pooling to (out_t, out_f) bins with adaptive bin edges.
Var adaptive_avg_pool(const Var& x, std::size_t out_t, std::size_t out_f);

// Bilinear resize with half-pixel centers (align_corners = false).
Var bilinear_resize(const Var& x, std::size_t out_t, std::size_t out_f);

// Multiplies plane p, bin f by factors[p * F + f]; factors are constant.
Var scale_bins(const Var& x, const std::vector<double>& factors);

// Treats channels (real_channel, real_channel + 1) of batch item b as a
// spectrogram and returns the synthesized waveform of the given length (L).
Var istft(const Var& planes, std::size_t batch_index,
          std::size_t real_channel, const StftConfig& cfg,
          std::size_t length);

}  // namespace dpccn::ops

#endif  // DPCCN_OPS_H_
