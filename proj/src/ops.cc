// Copyright 2026 The DPCCN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dpccn/ops.h"

#include <algorithm>
#include <cmath>
#include <memory>

#include <Eigen/Core>

#include "dpccn/error.h"

namespace dpccn::ops {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using StridedMat = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMat = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

// Upper bound on im2col buffer elements; larger maps are processed in time
// chunks.
constexpr std::size_t kColumnBudget = std::size_t{1} << 21;

struct Plane {
  std::size_t channels, frames, bins;
};

void require_rank4(const Tensor& t, const char* what) {
  DPCCN_CHECK_ARG(t.rank() == 4, std::string(what) + " expects a 4-D map, got " +
                                     shape_string(t.shape()));
}

// Unfolds output frames [t0, t1) of one batch item into a
// (C * kt * kf) x ((t1 - t0) * out_f) column matrix.
void im2col(const double* x, const Plane& in, const ConvGeometry& g,
            std::size_t out_f, std::size_t t0, std::size_t t1, double* cols) {
  const std::size_t n = (t1 - t0) * out_f;
  for (std::size_t c = 0; c < in.channels; ++c)
    for (std::size_t i = 0; i < g.kernel_t; ++i)
      for (std::size_t j = 0; j < g.kernel_f; ++j) {
        double* row = cols + ((c * g.kernel_t + i) * g.kernel_f + j) * n;
        for (std::size_t t = t0; t < t1; ++t) {
          double* dst = row + (t - t0) * out_f;
          auto ti = static_cast<long>(t * g.stride_t + i * g.dilation_t) -
                    static_cast<long>(g.pad_t);
          if (ti < 0 || ti >= static_cast<long>(in.frames)) {
            std::fill(dst, dst + out_f, 0.0);
            continue;
          }
          const double* src = x + (c * in.frames + static_cast<std::size_t>(ti)) * in.bins;
          for (std::size_t f = 0; f < out_f; ++f) {
            auto fi = static_cast<long>(f * g.stride_f + j * g.dilation_f) -
                      static_cast<long>(g.pad_f);
            dst[f] = (fi >= 0 && fi < static_cast<long>(in.bins)) ? src[fi] : 0.0;
          }
        }
      }
}

// Adjoint of im2col: accumulates columns back into x.
void col2im(const double* cols, const Plane& in, const ConvGeometry& g,
            std::size_t out_f, std::size_t t0, std::size_t t1, double* x) {
  const std::size_t n = (t1 - t0) * out_f;
  for (std::size_t c = 0; c < in.channels; ++c)
    for (std::size_t i = 0; i < g.kernel_t; ++i)
      for (std::size_t j = 0; j < g.kernel_f; ++j) {
        const double* row = cols + ((c * g.kernel_t + i) * g.kernel_f + j) * n;
        for (std::size_t t = t0; t < t1; ++t) {
          auto ti = static_cast<long>(t * g.stride_t + i * g.dilation_t) -
                    static_cast<long>(g.pad_t);
          if (ti < 0 || ti >= static_cast<long>(in.frames)) continue;
          const double* src = row + (t - t0) * out_f;
          double* dst = x + (c * in.frames + static_cast<std::size_t>(ti)) * in.bins;
          for (std::size_t f = 0; f < out_f; ++f) {
            auto fi = static_cast<long>(f * g.stride_f + j * g.dilation_f) -
                      static_cast<long>(g.pad_f);
            if (fi >= 0 && fi < static_cast<long>(in.bins)) dst[fi] += src[f];
          }
        }
      }
}

bool is_pointwise(const ConvGeometry& g) {
  return g.kernel_t == 1 && g.kernel_f == 1 && g.stride_t == 1 &&
         g.stride_f == 1 && g.pad_t == 0 && g.pad_f == 0;
}

std::size_t chunk_frames(std::size_t rows, std::size_t out_t, std::size_t out_f) {
  std::size_t per_frame = std::max<std::size_t>(1, rows * out_f);
  return std::clamp<std::size_t>(kColumnBudget / per_frame, 1, out_t);
}

// Shared implementation of y = W * unfold(x) for one batch item, or its two
// adjoints. The "wide" side is the side the convolution reads from.
struct ConvKernel {
  Plane wide;       // convolution input (C_in, T, F)
  Plane narrow;     // convolution output (C_out, T', F')
  ConvGeometry geom;
  std::size_t rows() const { return wide.channels * geom.kernel_t * geom.kernel_f; }

  // narrow = W (C_out x rows) * cols(wide)
  void forward(const double* w, const double* wide_x, double* narrow_y) const {
    const std::size_t plane = narrow.frames * narrow.bins;
    ConstMapMat wm(w, static_cast<long>(narrow.channels), static_cast<long>(rows()));
    if (is_pointwise(geom)) {
      ConstMapMat xm(wide_x, static_cast<long>(wide.channels), static_cast<long>(plane));
      MapMat ym(narrow_y, static_cast<long>(narrow.channels), static_cast<long>(plane));
      ym.noalias() += wm * xm;
      return;
    }
    const std::size_t step = chunk_frames(rows(), narrow.frames, narrow.bins);
    std::vector<double> cols(rows() * step * narrow.bins);
    for (std::size_t t0 = 0; t0 < narrow.frames; t0 += step) {
      std::size_t t1 = std::min(narrow.frames, t0 + step);
      std::size_t n = (t1 - t0) * narrow.bins;
      im2col(wide_x, wide, geom, narrow.bins, t0, t1, cols.data());
      ConstMapMat cm(cols.data(), static_cast<long>(rows()), static_cast<long>(n));
      StridedMat ym(narrow_y + t0 * narrow.bins, static_cast<long>(narrow.channels),
                    static_cast<long>(n), Eigen::OuterStride<>(static_cast<long>(plane)));
      ym.noalias() += wm * cm;
    }
  }

  // wide += fold(W^T * narrow)
  void backward_data(const double* w, const double* narrow_g, double* wide_g) const {
    const std::size_t plane = narrow.frames * narrow.bins;
    ConstMapMat wm(w, static_cast<long>(narrow.channels), static_cast<long>(rows()));
    if (is_pointwise(geom)) {
      ConstMapMat gm(narrow_g, static_cast<long>(narrow.channels), static_cast<long>(plane));
      MapMat xm(wide_g, static_cast<long>(wide.channels), static_cast<long>(plane));
      xm.noalias() += wm.transpose() * gm;
      return;
    }
    const std::size_t step = chunk_frames(rows(), narrow.frames, narrow.bins);
    std::vector<double> cols(rows() * step * narrow.bins);
    for (std::size_t t0 = 0; t0 < narrow.frames; t0 += step) {
      std::size_t t1 = std::min(narrow.frames, t0 + step);
      std::size_t n = (t1 - t0) * narrow.bins;
      ConstStridedMat gm(narrow_g + t0 * narrow.bins, static_cast<long>(narrow.channels),
                         static_cast<long>(n), Eigen::OuterStride<>(static_cast<long>(plane)));
      MapMat cm(cols.data(), static_cast<long>(rows()), static_cast<long>(n));
      cm.noalias() = wm.transpose() * gm;
      col2im(cols.data(), wide, geom, narrow.bins, t0, t1, wide_g);
    }
  }

  // gW += narrow * cols(wide)^T
  void backward_weight(const double* wide_x, const double* narrow_g, double* gw) const {
    const std::size_t plane = narrow.frames * narrow.bins;
    MapMat gwm(gw, static_cast<long>(narrow.channels), static_cast<long>(rows()));
    if (is_pointwise(geom)) {
      ConstMapMat xm(wide_x, static_cast<long>(wide.channels), static_cast<long>(plane));
      ConstMapMat gm(narrow_g, static_cast<long>(narrow.channels), static_cast<long>(plane));
      gwm.noalias() += gm * xm.transpose();
      return;
    }
    const std::size_t step = chunk_frames(rows(), narrow.frames, narrow.bins);
    std::vector<double> cols(rows() * step * narrow.bins);
    for (std::size_t t0 = 0; t0 < narrow.frames; t0 += step) {
      std::size_t t1 = std::min(narrow.frames, t0 + step);
      std::size_t n = (t1 - t0) * narrow.bins;
      im2col(wide_x, wide, geom, narrow.bins, t0, t1, cols.data());
      ConstMapMat cm(cols.data(), static_cast<long>(rows()), static_cast<long>(n));
      ConstStridedMat gm(narrow_g + t0 * narrow.bins, static_cast<long>(narrow.channels),
                         static_cast<long>(n), Eigen::OuterStride<>(static_cast<long>(plane)));
      gwm.noalias() += gm * cm.transpose();
    }
  }
};

void add_bias(Tensor* y, const Tensor& bias) {
  const std::size_t batch = y->dim(0), ch = y->dim(1), plane = y->dim(2) * y->dim(3);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c) {
      double* p = y->data() + (b * ch + c) * plane;
      const double v = bias[c];
      for (std::size_t i = 0; i < plane; ++i) p[i] += v;
    }
}

void accumulate_bias_grad(const Tensor& g, Tensor* gb) {
  const std::size_t batch = g.dim(0), ch = g.dim(1), plane = g.dim(2) * g.dim(3);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c) {
      const double* p = g.data() + (b * ch + c) * plane;
      double s = 0.0;
      for (std::size_t i = 0; i < plane; ++i) s += p[i];
      (*gb)[c] += s;
    }
}

void accumulate(Tensor* dst, const Tensor& src) {
  double* d = dst->data();
  const double* s = src.data();
  for (std::size_t i = 0; i < src.size(); ++i) d[i] += s[i];
}

// Bilinear source taps for one axis.
struct Taps {
  std::vector<std::size_t> lo, hi;
  std::vector<double> w_lo, w_hi;
};

Taps bilinear_taps(std::size_t in, std::size_t out) {
  Taps taps;
  taps.lo.resize(out);
  taps.hi.resize(out);
  taps.w_lo.resize(out);
  taps.w_hi.resize(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = std::max(0.0, (static_cast<double>(o) + 0.5) * ratio - 0.5);
    auto i0 = std::min(static_cast<std::size_t>(src), in - 1);
    std::size_t i1 = i0 + (i0 + 1 < in ? 1 : 0);
    double l1 = src - static_cast<double>(i0);
    taps.lo[o] = i0;
    taps.hi[o] = i1;
    taps.w_lo[o] = 1.0 - l1;
    taps.w_hi[o] = l1;
  }
  return taps;
}

std::pair<std::size_t, std::size_t> pool_bin(std::size_t i, std::size_t in, std::size_t out) {
  std::size_t start = (i * in) / out;
  std::size_t end = ((i + 1) * in + out - 1) / out;
  return {start, end};
}

}  // namespace

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                             std::size_t pad, std::size_t dilation) {
  const std::size_t span = dilation * (kernel - 1) + 1;
  DPCCN_CHECK_ARG(in + 2 * pad >= span,
                  "input size " + std::to_string(in) + " too small for kernel span " +
                      std::to_string(span));
  return (in + 2 * pad - span) / stride + 1;
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, const ConvGeometry& geom) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  require_rank4(xv, "conv2d");
  DPCCN_CHECK_ARG(wv.rank() == 4 && wv.dim(1) == xv.dim(1) &&
                      wv.dim(2) == geom.kernel_t && wv.dim(3) == geom.kernel_f,
                  "conv2d weight " + shape_string(wv.shape()) +
                      " does not match input " + shape_string(xv.shape()));
  DPCCN_CHECK_ARG(bias.value().size() == wv.dim(0), "conv2d bias size mismatch");
  const std::size_t batch = xv.dim(0);
  ConvKernel k;
  k.geom = geom;
  k.wide = {xv.dim(1), xv.dim(2), xv.dim(3)};
  k.narrow = {wv.dim(0),
              conv_output_size(xv.dim(2), geom.kernel_t, geom.stride_t, geom.pad_t, geom.dilation_t),
              conv_output_size(xv.dim(3), geom.kernel_f, geom.stride_f, geom.pad_f, geom.dilation_f)};
  Tensor y({batch, k.narrow.channels, k.narrow.frames, k.narrow.bins});
  const std::size_t in_sz = k.wide.channels * k.wide.frames * k.wide.bins;
  const std::size_t out_sz = k.narrow.channels * k.narrow.frames * k.narrow.bins;
  for (std::size_t b = 0; b < batch; ++b)
    k.forward(wv.data(), xv.data() + b * in_sz, y.data() + b * out_sz);
  add_bias(&y, bias.value());

  return ag::make_result(std::move(y), {x, weight, bias}, [k, batch, in_sz, out_sz](ag::Node& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    auto& pb = *self.parents[2];
    const Tensor& g = self.grad;
    for (std::size_t b = 0; b < batch; ++b) {
      if (pw.requires_grad)
        k.backward_weight(px.val().data() + b * in_sz, g.data() + b * out_sz, pw.grad_ref().data());
      if (px.requires_grad)
        k.backward_data(pw.val().data(), g.data() + b * out_sz, px.grad_ref().data() + b * in_sz);
    }
    if (pb.requires_grad) accumulate_bias_grad(g, &pb.grad_ref());
  });
}

Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias,
                     const ConvGeometry& geom, std::size_t out_t, std::size_t out_f) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  require_rank4(xv, "conv_transpose2d");
  DPCCN_CHECK_ARG(wv.rank() == 4 && wv.dim(0) == xv.dim(1) &&
                      wv.dim(2) == geom.kernel_t && wv.dim(3) == geom.kernel_f,
                  "conv_transpose2d weight " + shape_string(wv.shape()) +
                      " does not match input " + shape_string(xv.shape()));
  DPCCN_CHECK_ARG(bias.value().size() == wv.dim(1), "conv_transpose2d bias size mismatch");
  DPCCN_CHECK_ARG(
      conv_output_size(out_t, geom.kernel_t, geom.stride_t, geom.pad_t, geom.dilation_t) == xv.dim(2) &&
          conv_output_size(out_f, geom.kernel_f, geom.stride_f, geom.pad_f, geom.dilation_f) == xv.dim(3),
      "conv_transpose2d output size (" + std::to_string(out_t) + ", " + std::to_string(out_f) +
          ") is not reachable from input " + shape_string(xv.shape()));
  const std::size_t batch = xv.dim(0);
  // The transposed convolution is the data adjoint of a convolution from the
  // output grid (wide) to the input grid (narrow).
  ConvKernel k;
  k.geom = geom;
  k.wide = {wv.dim(1), out_t, out_f};
  k.narrow = {wv.dim(0), xv.dim(2), xv.dim(3)};
  Tensor y({batch, k.wide.channels, out_t, out_f});
  const std::size_t in_sz = k.narrow.channels * k.narrow.frames * k.narrow.bins;
  const std::size_t out_sz = k.wide.channels * out_t * out_f;
  for (std::size_t b = 0; b < batch; ++b)
    k.backward_data(wv.data(), xv.data() + b * in_sz, y.data() + b * out_sz);
  add_bias(&y, bias.value());

  return ag::make_result(std::move(y), {x, weight, bias}, [k, batch, in_sz, out_sz](ag::Node& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    auto& pb = *self.parents[2];
    const Tensor& g = self.grad;
    for (std::size_t b = 0; b < batch; ++b) {
      if (pw.requires_grad)
        k.backward_weight(g.data() + b * out_sz, px.val().data() + b * in_sz, pw.grad_ref().data());
      if (px.requires_grad)
        k.forward(pw.val().data(), g.data() + b * out_sz, px.grad_ref().data() + b * in_sz);
    }
    if (pb.requires_grad) accumulate_bias_grad(g, &pb.grad_ref());
  });
}

Var elu(const Var& x) {
  const Tensor& xv = x.value();
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = xv[i] > 0.0 ? xv[i] : std::expm1(xv[i]);
  return ag::make_result(std::move(y), {x}, [](ag::Node& self) {
    auto& px = *self.parents[0];
    const Tensor& y = self.value;
    Tensor& gx = px.grad_ref();
    for (std::size_t i = 0; i < y.size(); ++i)
      gx[i] += self.grad[i] * (y[i] > 0.0 ? 1.0 : y[i] + 1.0);
  });
}

Var relu(const Var& x) {
  const Tensor& xv = x.value();
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = std::max(0.0, xv[i]);
  return ag::make_result(std::move(y), {x}, [](ag::Node& self) {
    auto& px = *self.parents[0];
    Tensor& gx = px.grad_ref();
    for (std::size_t i = 0; i < self.value.size(); ++i)
      if (self.value[i] > 0.0) gx[i] += self.grad[i];
  });
}

Var instance_norm(const Var& x, const Var& gain, const Var& offset, double eps) {
  const Tensor& xv = x.value();
  require_rank4(xv, "instance_norm");
  const std::size_t batch = xv.dim(0), ch = xv.dim(1), n = xv.dim(2) * xv.dim(3);
  DPCCN_CHECK_ARG(gain.value().size() == ch && offset.value().size() == ch,
                  "instance_norm affine size mismatch");
  auto xhat = std::make_shared<Tensor>(xv.shape());
  auto inv_std = std::make_shared<std::vector<double>>(batch * ch);
  Tensor y(xv.shape());
  const Tensor& gv = gain.value();
  const Tensor& ov = offset.value();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t base = (b * ch + c) * n;
      const double* p = xv.data() + base;
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += p[i];
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (std::size_t i = 0; i < n; ++i) var += (p[i] - mean) * (p[i] - mean);
      var /= static_cast<double>(n);
      double is = 1.0 / std::sqrt(var + eps);
      (*inv_std)[b * ch + c] = is;
      for (std::size_t i = 0; i < n; ++i) {
        double h = (p[i] - mean) * is;
        (*xhat)[base + i] = h;
        y[base + i] = gv[c] * h + ov[c];
      }
    }
  return ag::make_result(std::move(y), {x, gain, offset},
                         [xhat, inv_std, batch, ch, n](ag::Node& self) {
    auto& px = *self.parents[0];
    auto& pg = *self.parents[1];
    auto& po = *self.parents[2];
    const Tensor& g = self.grad;
    const Tensor& gv = pg.val();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < ch; ++c) {
        const std::size_t base = (b * ch + c) * n;
        double sum_g = 0.0, sum_gh = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          sum_g += g[base + i];
          sum_gh += g[base + i] * (*xhat)[base + i];
        }
        if (pg.requires_grad) pg.grad_ref()[c] += sum_gh;
        if (po.requires_grad) po.grad_ref()[c] += sum_g;
        if (px.requires_grad) {
          Tensor& gx = px.grad_ref();
          const double k = gv[c] * (*inv_std)[b * ch + c] / static_cast<double>(n);
          const double dn = static_cast<double>(n);
          for (std::size_t i = 0; i < n; ++i)
            gx[base + i] += k * (dn * g[base + i] - sum_g - (*xhat)[base + i] * sum_gh);
        }
      }
  });
}

Var channel_layer_norm(const Var& x, const Var& gain, const Var& offset, double eps) {
  const Tensor& xv = x.value();
  require_rank4(xv, "channel_layer_norm");
  const std::size_t batch = xv.dim(0), ch = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
  DPCCN_CHECK_ARG(gain.value().size() == ch && offset.value().size() == ch,
                  "channel_layer_norm affine size mismatch");
  auto xhat = std::make_shared<Tensor>(xv.shape());
  auto inv_std = std::make_shared<std::vector<double>>(batch * plane);
  Tensor y(xv.shape());
  const Tensor& gv = gain.value();
  const Tensor& ov = offset.value();
  const double dc = static_cast<double>(ch);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t p = 0; p < plane; ++p) {
      auto idx = [&](std::size_t c) { return (b * ch + c) * plane + p; };
      double mean = 0.0;
      for (std::size_t c = 0; c < ch; ++c) mean += xv[idx(c)];
      mean /= dc;
      double var = 0.0;
      for (std::size_t c = 0; c < ch; ++c) var += (xv[idx(c)] - mean) * (xv[idx(c)] - mean);
      var /= dc;
      double is = 1.0 / std::sqrt(var + eps);
      (*inv_std)[b * plane + p] = is;
      for (std::size_t c = 0; c < ch; ++c) {
        double h = (xv[idx(c)] - mean) * is;
        (*xhat)[idx(c)] = h;
        y[idx(c)] = gv[c] * h + ov[c];
      }
    }
  return ag::make_result(std::move(y), {x, gain, offset},
                         [xhat, inv_std, batch, ch, plane](ag::Node& self) {
    auto& px = *self.parents[0];
    auto& pg = *self.parents[1];
    auto& po = *self.parents[2];
    const Tensor& g = self.grad;
    const Tensor& gv = pg.val();
    const double dc = static_cast<double>(ch);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t p = 0; p < plane; ++p) {
        auto idx = [&](std::size_t c) { return (b * ch + c) * plane + p; };
        double sum_gh_hat = 0.0, sum_gh = 0.0;
        for (std::size_t c = 0; c < ch; ++c) {
          double ghat = g[idx(c)] * gv[c];
          sum_gh_hat += ghat;
          sum_gh += ghat * (*xhat)[idx(c)];
          if (pg.requires_grad) pg.grad_ref()[c] += g[idx(c)] * (*xhat)[idx(c)];
          if (po.requires_grad) po.grad_ref()[c] += g[idx(c)];
        }
        if (px.requires_grad) {
          Tensor& gx = px.grad_ref();
          const double is = (*inv_std)[b * plane + p];
          for (std::size_t c = 0; c < ch; ++c) {
            double ghat = g[idx(c)] * gv[c];
            gx[idx(c)] += is / dc * (dc * ghat - sum_gh_hat - (*xhat)[idx(c)] * sum_gh);
          }
        }
      }
  });
}

Var concat_channels(const std::vector<Var>& xs) {
  DPCCN_CHECK_ARG(!xs.empty(), "concat of nothing");
  const Shape& s0 = xs[0].shape();
  require_rank4(xs[0].value(), "concat_channels");
  std::size_t total = 0;
  for (const auto& x : xs) {
    const Shape& s = x.shape();
    DPCCN_CHECK_ARG(s.size() == 4 && s[0] == s0[0] && s[2] == s0[2] && s[3] == s0[3],
                    "concat shape mismatch: " + shape_string(s) + " vs " + shape_string(s0));
    total += s[1];
  }
  const std::size_t batch = s0[0], plane = s0[2] * s0[3];
  Tensor y({batch, total, s0[2], s0[3]});
  std::vector<std::size_t> widths;
  for (std::size_t b = 0; b < batch; ++b) {
    std::size_t offset = 0;
    for (const auto& x : xs) {
      const std::size_t c = x.shape()[1];
      const double* src = x.value().data() + b * c * plane;
      std::copy(src, src + c * plane, y.data() + (b * total + offset) * plane);
      offset += c;
    }
  }
  for (const auto& x : xs) widths.push_back(x.shape()[1]);
  return ag::make_result(std::move(y), xs, [widths, batch, total, plane](ag::Node& self) {
    for (std::size_t b = 0; b < batch; ++b) {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < widths.size(); ++k) {
        auto& p = *self.parents[k];
        if (p.requires_grad) {
          const double* src = self.grad.data() + (b * total + offset) * plane;
          double* dst = p.grad_ref().data() + b * widths[k] * plane;
          for (std::size_t i = 0; i < widths[k] * plane; ++i) dst[i] += src[i];
        }
        offset += widths[k];
      }
    }
  });
}

Var add(const Var& a, const Var& b) {
  DPCCN_CHECK_ARG(a.shape() == b.shape(), "add shape mismatch: " + shape_string(a.shape()) +
                                              " vs " + shape_string(b.shape()));
  Tensor y = a.value();
  accumulate(&y, b.value());
  return ag::make_result(std::move(y), {a, b}, [](ag::Node& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) accumulate(&p->grad_ref(), self.grad);
  });
}

Var scale(const Var& x, double factor) {
  Tensor y = x.value();
  for (auto& v : y.values()) v *= factor;
  return ag::make_result(std::move(y), {x}, [factor](ag::Node& self) {
    Tensor& gx = self.parents[0]->grad_ref();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor * self.grad[i];
  });
}

Var mean_of(const std::vector<Var>& xs) {
  DPCCN_CHECK_ARG(!xs.empty(), "mean of nothing");
  Tensor y(xs[0].shape());
  for (const auto& x : xs) {
    DPCCN_CHECK_ARG(x.shape() == y.shape(), "mean_of shape mismatch");
    accumulate(&y, x.value());
  }
  const double inv = 1.0 / static_cast<double>(xs.size());
  for (auto& v : y.values()) v *= inv;
  return ag::make_result(std::move(y), xs, [inv](ag::Node& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) {
        Tensor& g = p->grad_ref();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += inv * self.grad[i];
      }
  });
}

Var mul_broadcast_time(const Var& x, const Var& e) {
  const Tensor& xv = x.value();
  const Tensor& ev = e.value();
  require_rank4(xv, "mul_broadcast_time");
  DPCCN_CHECK_ARG(ev.rank() == 4 && ev.dim(0) == xv.dim(0) && ev.dim(1) == xv.dim(1) &&
                      ev.dim(2) == 1 && ev.dim(3) == xv.dim(3),
                  "conditioning vector " + shape_string(ev.shape()) +
                      " does not broadcast over " + shape_string(xv.shape()));
  const std::size_t B = xv.dim(0), C = xv.dim(1), T = xv.dim(2), F = xv.dim(3);
  Tensor y(xv.shape());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t f = 0; f < F; ++f)
          y.at(b, c, t, f) = xv.at(b, c, t, f) * ev.at(b, c, 0, f);
  return ag::make_result(std::move(y), {x, e}, [B, C, T, F](ag::Node& self) {
    auto& px = *self.parents[0];
    auto& pe = *self.parents[1];
    const Tensor& g = self.grad;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t < T; ++t)
          for (std::size_t f = 0; f < F; ++f) {
            double gi = g.at(b, c, t, f);
            if (px.requires_grad) px.grad_ref().at(b, c, t, f) += gi * pe.val().at(b, c, 0, f);
            if (pe.requires_grad) pe.grad_ref().at(b, c, 0, f) += gi * px.val().at(b, c, t, f);
          }
  });
}

Var to_sequence(const Var& x) {
  const Tensor& xv = x.value();
  require_rank4(xv, "to_sequence");
  const std::size_t B = xv.dim(0), C = xv.dim(1), T = xv.dim(2), F = xv.dim(3);
  Tensor y({B, C * F, T, 1});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t f = 0; f < F; ++f) y.at(b, c * F + f, t, 0) = xv.at(b, c, t, f);
  return ag::make_result(std::move(y), {x}, [B, C, T, F](ag::Node& self) {
    Tensor& gx = self.parents[0]->grad_ref();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t < T; ++t)
          for (std::size_t f = 0; f < F; ++f) gx.at(b, c, t, f) += self.grad.at(b, c * F + f, t, 0);
  });
}

Var from_sequence(const Var& x, std::size_t channels, std::size_t bins) {
  const Tensor& xv = x.value();
  require_rank4(xv, "from_sequence");
  DPCCN_CHECK_ARG(xv.dim(3) == 1 && xv.dim(1) == channels * bins,
                  "cannot unflatten " + shape_string(xv.shape()) + " into " +
                      std::to_string(channels) + " x " + std::to_string(bins));
  const std::size_t B = xv.dim(0), T = xv.dim(2), C = channels, F = bins;
  Tensor y({B, C, T, F});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t f = 0; f < F; ++f) y.at(b, c, t, f) = xv.at(b, c * F + f, t, 0);
  return ag::make_result(std::move(y), {x}, [B, C, T, F](ag::Node& self) {
    Tensor& gx = self.parents[0]->grad_ref();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t < T; ++t)
          for (std::size_t f = 0; f < F; ++f) gx.at(b, c * F + f, t, 0) += self.grad.at(b, c, t, f);
  });
}

Var mean_time(const Var& x) {
  const Tensor& xv = x.value();
  require_rank4(xv, "mean_time");
  const std::size_t B = xv.dim(0), C = xv.dim(1), T = xv.dim(2), F = xv.dim(3);
  Tensor y({B, C, 1, F});
  const double inv = 1.0 / static_cast<double>(T);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t f = 0; f < F; ++f) y.at(b, c, 0, f) += inv * xv.at(b, c, t, f);
  return ag::make_result(std::move(y), {x}, [B, C, T, F, inv](ag::Node& self) {
    Tensor& gx = self.parents[0]->grad_ref();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t < T; ++t)
          for (std::size_t f = 0; f < F; ++f) gx.at(b, c, t, f) += inv * self.grad.at(b, c, 0, f);
  });
}

Var adaptive_avg_pool(const Var& x, std::size_t out_t, std::size_t out_f) {
  const Tensor& xv = x.value();
  require_rank4(xv, "adaptive_avg_pool");
  const std::size_t B = xv.dim(0), C = xv.dim(1), T = xv.dim(2), F = xv.dim(3);
  DPCCN_CHECK_ARG(out_t >= 1 && out_f >= 1 && out_t <= T && out_f <= F,
                  "pool size exceeds map size");
  Tensor y({B, C, out_t, out_f});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < out_t; ++i) {
        auto [t0, t1] = pool_bin(i, T, out_t);
        for (std::size_t j = 0; j < out_f; ++j) {
          auto [f0, f1] = pool_bin(j, F, out_f);
          double s = 0.0;
          for (std::size_t t = t0; t < t1; ++t)
            for (std::size_t f = f0; f < f1; ++f) s += xv.at(b, c, t, f);
          y.at(b, c, i, j) = s / static_cast<double>((t1 - t0) * (f1 - f0));
        }
      }
  return ag::make_result(std::move(y), {x}, [B, C, T, F, out_t, out_f](ag::Node& self) {
    Tensor& gx = self.parents[0]->grad_ref();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < out_t; ++i) {
          auto [t0, t1] = pool_bin(i, T, out_t);
          for (std::size_t j = 0; j < out_f; ++j) {
            auto [f0, f1] = pool_bin(j, F, out_f);
            double g = self.grad.at(b, c, i, j) / static_cast<double>((t1 - t0) * (f1 - f0));
            for (std::size_t t = t0; t < t1; ++t)
              for (std::size_t f = f0; f < f1; ++f) gx.at(b, c, t, f) += g;
          }
        }
  });
}

Var bilinear_resize(const Var& x, std::size_t out_t, std::size_t out_f) {
  const Tensor& xv = x.value();
  require_rank4(xv, "bilinear_resize");
  const std::size_t B = xv.dim(0), C = xv.dim(1), T = xv.dim(2), F = xv.dim(3);
  auto tt = std::make_shared<Taps>(bilinear_taps(T, out_t));
  auto tf = std::make_shared<Taps>(bilinear_taps(F, out_f));
  Tensor y({B, C, out_t, out_f});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < out_t; ++i)
        for (std::size_t j = 0; j < out_f; ++j) {
          y.at(b, c, i, j) =
              tt->w_lo[i] * (tf->w_lo[j] * xv.at(b, c, tt->lo[i], tf->lo[j]) +
                             tf->w_hi[j] * xv.at(b, c, tt->lo[i], tf->hi[j])) +
              tt->w_hi[i] * (tf->w_lo[j] * xv.at(b, c, tt->hi[i], tf->lo[j]) +
                             tf->w_hi[j] * xv.at(b, c, tt->hi[i], tf->hi[j]));
        }
  return ag::make_result(std::move(y), {x}, [tt, tf, B, C, out_t, out_f](ag::Node& self) {
    Tensor& gx = self.parents[0]->grad_ref();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < out_t; ++i)
          for (std::size_t j = 0; j < out_f; ++j) {
            double g = self.grad.at(b, c, i, j);
            gx.at(b, c, tt->lo[i], tf->lo[j]) += g * tt->w_lo[i] * tf->w_lo[j];
            gx.at(b, c, tt->lo[i], tf->hi[j]) += g * tt->w_lo[i] * tf->w_hi[j];
            gx.at(b, c, tt->hi[i], tf->lo[j]) += g * tt->w_hi[i] * tf->w_lo[j];
            gx.at(b, c, tt->hi[i], tf->hi[j]) += g * tt->w_hi[i] * tf->w_hi[j];
          }
  });
}

Var scale_bins(const Var& x, const std::vector<double>& factors) {
  const Tensor& xv = x.value();
  require_rank4(xv, "scale_bins");
  const std::size_t B = xv.dim(0), P = xv.dim(1), T = xv.dim(2), F = xv.dim(3);
  DPCCN_CHECK_ARG(factors.size() == P * F, "scale_bins factor layout mismatch");
  Tensor y(xv.shape());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t p = 0; p < P; ++p)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t f = 0; f < F; ++f) y.at(b, p, t, f) = xv.at(b, p, t, f) * factors[p * F + f];
  return ag::make_result(std::move(y), {x}, [factors, B, P, T, F](ag::Node& self) {
    Tensor& gx = self.parents[0]->grad_ref();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t p = 0; p < P; ++p)
        for (std::size_t t = 0; t < T; ++t)
          for (std::size_t f = 0; f < F; ++f)
            gx.at(b, p, t, f) += self.grad.at(b, p, t, f) * factors[p * F + f];
  });
}

Var istft(const Var& planes, std::size_t batch_index, std::size_t real_channel,
          const StftConfig& cfg, std::size_t length) {
  const Tensor& pv = planes.value();
  require_rank4(pv, "istft");
  DPCCN_CHECK_ARG(batch_index < pv.dim(0) && real_channel + 1 < pv.dim(1),
                  "istft channel selection out of range");
  DPCCN_CHECK_ARG(pv.dim(3) == cfg.num_bins(), "istft bins do not match STFT config");
  const std::size_t C = pv.dim(1), T = pv.dim(2), F = pv.dim(3);
  ComplexSpectrogram spec;
  spec.frames = T;
  spec.bins = F;
  spec.original_length = length;
  const double* re = pv.data() + (batch_index * C + real_channel) * T * F;
  spec.real.assign(re, re + T * F);
  spec.imag.assign(re + T * F, re + 2 * T * F);
  auto samples = dpccn::istft(spec, cfg);
  Tensor y({length}, std::move(samples));
  return ag::make_result(std::move(y), {planes},
                         [batch_index, real_channel, cfg, C, T, F](ag::Node& self) {
    std::vector<double> gr, gi;
    istft_backward(self.grad.values(), T, cfg, &gr, &gi);
    double* dst = self.parents[0]->grad_ref().data() + (batch_index * C + real_channel) * T * F;
    for (std::size_t i = 0; i < T * F; ++i) {
      dst[i] += gr[i];
      dst[T * F + i] += gi[i];
    }
  });
}

}  // namespace dpccn::ops
