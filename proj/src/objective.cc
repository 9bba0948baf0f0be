// Copyright 2026 The DPCCN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dpccn/objective.h"

#include <cmath>
#include <numbers>
#include <numeric>

#include "dpccn/error.h"
#include "dpccn/metrics.h"
#include "dpccn/ops.h"

namespace dpccn {
namespace {

constexpr std::size_t kMaxPitSources = 4;

void check_counts(std::size_t ests, std::size_t refs) {
  DPCCN_CHECK_ARG(ests == refs && refs >= 1 && refs <= kMaxPitSources,
                  "uPIT needs 1-4 estimates matching the references, got " +
                      std::to_string(ests) + " and " + std::to_string(refs));
}

std::vector<std::size_t> best_permutation(const std::vector<double>& table, std::size_t s,
                                          double* loss) {
  std::vector<std::size_t> best;
  double best_loss = INFINITY;
  for (const auto& p : permutations(s)) {
    double l = 0.0;
    for (std::size_t i = 0; i < s; ++i) l += table[i * s + p[i]];
    l /= static_cast<double>(s);
    // NaN never compares less; keep the first pairing so the NaN propagates.
    if (best.empty() || l < best_loss) {
      best_loss = l;
      best = p;
    }
  }
  *loss = best_loss;
  return best;
}

}  // namespace

double neg_sisnr(std::span<const double> est, std::span<const double> ref) {
  return -sisnr(est, ref);
}

ag::Var neg_sisnr(const ag::Var& est, std::span<const double> ref_in) {
  const auto& xv = est.value().storage();
  DPCCN_CHECK_ARG(xv.size() == ref_in.size(), "neg_sisnr length mismatch");
  const std::size_t n = xv.size();
  const double value = -sisnr(xv, ref_in);

  std::vector<double> x(n), r(n);
  const double mx = std::accumulate(xv.begin(), xv.end(), 0.0) / n;
  const double mr = std::accumulate(ref_in.begin(), ref_in.end(), 0.0) / n;
  double xr = 0.0, rr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = xv[i] - mx;
    r[i] = ref_in[i] - mr;
    xr += x[i] * r[i];
    rr += r[i] * r[i];
  }
  return ag::make_result(
      Tensor({1}, {value}), {est},
      [x = std::move(x), r = std::move(r), xr, rr](ag::Node& self) {
        const std::size_t len = x.size();
        const double a = xr / rr;
        double target = 0.0, noise = 0.0;
        std::vector<double> s(len), e(len);
        for (std::size_t i = 0; i < len; ++i) {
          s[i] = a * r[i];
          e[i] = x[i] - s[i];
          target += s[i] * s[i];
          noise += e[i] * e[i];
        }
        const double den = noise + kSisnrEps;
        const double q = target / den + kSisnrEps;
        const double outer = -self.grad[0] * 10.0 / std::numbers::ln10 / q;
        std::vector<double> g(len);
        double mean = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
          g[i] = outer * (2.0 * s[i] * den - 2.0 * target * e[i]) / (den * den);
          mean += g[i];
        }
        mean /= static_cast<double>(len);
        Tensor& gx = self.parents[0]->grad_ref();
        for (std::size_t i = 0; i < len; ++i) gx[i] += g[i] - mean;
      });
}

LossValue upit_loss(const std::vector<ag::Var>& ests, const std::vector<Waveform>& refs) {
  const std::size_t s = refs.size();
  check_counts(ests.size(), s);
  std::vector<double> table(s * s);
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < s; ++j)
      table[i * s + j] = neg_sisnr(ests[i].value().storage(), refs[j].samples);
  LossValue out;
  out.permutation = best_permutation(table, s, &out.value);
  std::vector<ag::Var> terms;
  for (std::size_t i = 0; i < s; ++i)
    terms.push_back(neg_sisnr(ests[i], refs[out.permutation[i]].samples));
  out.loss = terms.size() == 1 ? terms[0] : ops::mean_of(terms);
  out.value = out.loss.value()[0];
  return out;
}

LossValue upit_loss(const std::vector<Waveform>& ests, const std::vector<Waveform>& refs) {
  const std::size_t s = refs.size();
  check_counts(ests.size(), s);
  std::vector<double> table(s * s);
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < s; ++j)
      table[i * s + j] = neg_sisnr(ests[i].samples, refs[j].samples);
  LossValue out;
  out.permutation = best_permutation(table, s, &out.value);
  return out;
}

LossValue tse_loss(const ag::Var& est, const Waveform& ref) {
  LossValue out;
  out.loss = neg_sisnr(est, ref.samples);
  out.value = out.loss.value()[0];
  out.permutation = {0};
  return out;
}

double tse_loss(const Waveform& est, const Waveform& ref) {
  return neg_sisnr(est.samples, ref.samples);
}

ag::Var batch_mean(const std::vector<ag::Var>& losses) {
  DPCCN_CHECK_ARG(!losses.empty(), "batch_mean of an empty batch");
  return losses.size() == 1 ? losses[0] : ops::mean_of(losses);
}

}  // namespace dpccn
