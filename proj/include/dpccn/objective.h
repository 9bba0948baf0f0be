// Copyright 2026 The DPCCN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DPCCN_OBJECTIVE_H_
#define DPCCN_OBJECTIVE_H_

#include <span>
#include <vector>

#include "dpccn/autograd.h"
#include "dpccn/signal.h"

namespace dpccn {

// -sisnr(est, ref) as a scalar (shape {1}) node, differentiable in est.
ag::Var neg_sisnr(const ag::Var& est, std::span<const double> ref);
double neg_sisnr(std::span<const double> est, std::span<const double> ref);

struct LossValue {
  ag::Var loss;  // scalar node
  double value = 0.0;
  std::vector<std::size_t> permutation;  // estimate i pairs with ref permutation[i]
};

// Mean negative SISNR under the best of all S! pairings (S <= 4).
LossValue upit_loss(const std::vector<ag::Var>& ests, const std::vector<Waveform>& refs);
// Value-only form.
LossValue upit_loss(const std::vector<Waveform>& ests, const std::vector<Waveform>& refs);

LossValue tse_loss(const ag::Var& est, const Waveform& ref);
double tse_loss(const Waveform& est, const Waveform& ref);

// Arithmetic mean of per-utterance scalar losses.
ag::Var batch_mean(const std::vector<ag::Var>& losses);

}  // namespace dpccn

#endif  // DPCCN_OBJECTIVE_H_
