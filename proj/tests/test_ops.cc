// Copyright 2026 The DPCCN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Every layer primitive against central finite differences, plus direct
// forward-value oracles.

#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"
#include "dpccn/error.h"
#include "dpccn/ops.h"

using namespace dpccn;
using ag::Var;

namespace {

std::mt19937_64 rng(1);

Tensor random_tensor(const Shape& s) {
  Tensor t(s);
  std::normal_distribution<double> n;
  for (auto& v : t.values()) v = n(rng);
  return t;
}

using Op = std::function<Var(const std::vector<Var>&)>;

// Worst relative error over sampled entries of <op(inputs), probe>.
double gradient_error(const Op& op, std::vector<Tensor> inputs) {
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(ag::parameter(t, true));
  Var out = op(vars);
  const Tensor probe = random_tensor(out.shape());
  ag::backward(out, probe);

  auto objective = [&] {
    std::vector<Var> vs;
    for (const auto& t : inputs) vs.push_back(ag::parameter(t, false));
    const Var result = op(vs);
    const Tensor& y = result.value();
    double s = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) s += y[j] * probe[j];
    return s;
  };
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k)
    for (int trial = 0; trial < 8; ++trial) {
      const std::size_t i = rng() % inputs[k].size();
      const double analytic = vars[k].grad().empty() ? 0.0 : vars[k].grad()[i];
      const double h = 1e-5, orig = inputs[k][i];
      inputs[k][i] = orig + h;
      const double plus = objective();
      inputs[k][i] = orig - h;
      const double minus = objective();
      inputs[k][i] = orig;
      const double numeric = (plus - minus) / (2 * h);
      worst = std::max(worst, std::abs(analytic - numeric) /
                                  std::max(1e-6, std::abs(analytic) + std::abs(numeric)));
    }
  return worst;
}

constexpr double kTol = 1e-6;

ops::ConvGeometry geometry(std::size_t kt, std::size_t kf, std::size_t sf, std::size_t pt,
                           std::size_t pf, std::size_t dt = 1) {
  ops::ConvGeometry g;
  g.kernel_t = kt;
  g.kernel_f = kf;
  g.stride_f = sf;
  g.pad_t = pt;
  g.pad_f = pf;
  g.dilation_t = dt;
  return g;
}

}  // namespace

TEST_CASE("conv2d gradients") {
  const auto g = geometry(3, 3, 2, 1, 1);
  CHECK(gradient_error([&](auto& v) { return ops::conv2d(v[0], v[1], v[2], g); },
                       {random_tensor({2, 3, 5, 9}), random_tensor({4, 3, 3, 3}),
                        random_tensor({4})}) < kTol);
  const auto d = geometry(3, 1, 1, 2, 0, 2);
  CHECK(gradient_error([&](auto& v) { return ops::conv2d(v[0], v[1], v[2], d); },
                       {random_tensor({1, 3, 7, 1}), random_tensor({2, 3, 3, 1}),
                        random_tensor({2})}) < kTol);
  CHECK(gradient_error(
            [&](auto& v) { return ops::conv2d(v[0], v[1], v[2], ops::ConvGeometry{}); },
            {random_tensor({2, 3, 5, 4}), random_tensor({4, 3, 1, 1}), random_tensor({4})}) <
        kTol);
}

TEST_CASE("conv2d forward matches a direct sum") {
  const auto g = geometry(3, 3, 2, 1, 1);
  const Tensor x = random_tensor({1, 2, 4, 7}), w = random_tensor({3, 2, 3, 3}),
               b = random_tensor({3});
  const Tensor y = ops::conv2d(ag::constant(x), ag::constant(w), ag::constant(b), g).value();
  REQUIRE(y.shape() == Shape{1, 3, 4, 4});
  for (std::size_t o = 0; o < 3; ++o)
    for (std::size_t t = 0; t < 4; ++t)
      for (std::size_t f = 0; f < 4; ++f) {
        double acc = b[o];
        for (std::size_t c = 0; c < 2; ++c)
          for (long i = 0; i < 3; ++i)
            for (long j = 0; j < 3; ++j) {
              const long tt = static_cast<long>(t) + i - 1, ff = static_cast<long>(2 * f) + j - 1;
              if (tt >= 0 && tt < 4 && ff >= 0 && ff < 7) acc += w.at(o, c, i, j) * x.at(0, c, tt, ff);
            }
        CHECK(y.at(0, o, t, f) == doctest::Approx(acc).epsilon(1e-12));
      }
}

TEST_CASE("conv_output_size follows standard framing") {
  CHECK(ops::conv_output_size(257, 3, 2, 1, 1) == 129);
  CHECK(ops::conv_output_size(5, 3, 2, 1, 1) == 3);
  CHECK(ops::conv_output_size(100, 3, 1, 1, 1) == 100);
}

TEST_CASE("transposed conv gradients and output size") {
  const auto g = geometry(3, 3, 2, 1, 1);
  CHECK(gradient_error(
            [&](auto& v) { return ops::conv_transpose2d(v[0], v[1], v[2], g, 5, 9); },
            {random_tensor({2, 4, 5, 5}), random_tensor({4, 3, 3, 3}), random_tensor({3})}) <
        kTol);
  const Var y = ops::conv_transpose2d(ag::constant(random_tensor({1, 4, 6, 5})),
                                      ag::constant(random_tensor({4, 2, 3, 3})),
                                      ag::constant(random_tensor({2})), g, 6, 9);
  CHECK(y.shape() == Shape{1, 2, 6, 9});
  CHECK_THROWS_AS(ops::conv_transpose2d(ag::constant(random_tensor({1, 4, 6, 5})),
                                        ag::constant(random_tensor({4, 2, 3, 3})),
                                        ag::constant(random_tensor({2})), g, 6, 20),
                  InvalidArgument);
}

TEST_CASE("transposed conv is the adjoint of conv") {
  // <conv(x), y> = <x, convT(y)> with shared weights and no bias.
  const auto g = geometry(3, 3, 2, 1, 1);
  const Tensor x = random_tensor({1, 3, 4, 9}), y = random_tensor({1, 2, 4, 5}),
               w = random_tensor({2, 3, 3, 3});
  const Var zero2 = ag::constant(Tensor({2})), zero3 = ag::constant(Tensor({3}));
  const Tensor cx = ops::conv2d(ag::constant(x), ag::constant(w), zero2, g).value();
  const Tensor ty = ops::conv_transpose2d(ag::constant(y), ag::constant(w), zero3, g, 4, 9).value();
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < cx.size(); ++i) lhs += cx[i] * y[i];
  for (std::size_t i = 0; i < ty.size(); ++i) rhs += ty[i] * x[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("activation and normalization gradients") {
  CHECK(gradient_error([](auto& v) { return ops::elu(v[0]); }, {random_tensor({1, 2, 3, 4})}) <
        kTol);
  CHECK(gradient_error([](auto& v) { return ops::instance_norm(v[0], v[1], v[2]); },
                       {random_tensor({2, 3, 4, 5}), random_tensor({3}), random_tensor({3})}) <
        kTol);
  CHECK(gradient_error([](auto& v) { return ops::channel_layer_norm(v[0], v[1], v[2]); },
                       {random_tensor({2, 5, 4, 1}), random_tensor({5}), random_tensor({5})}) <
        kTol);
}

TEST_CASE("instance norm output statistics") {
  Tensor x = random_tensor({1, 2, 6, 7});
  const Tensor y = ops::instance_norm(ag::constant(x), ag::constant(Tensor({2}, 1.0)),
                                      ag::constant(Tensor({2}, 0.0)))
                       .value();
  for (std::size_t c = 0; c < 2; ++c) {
    double m = 0.0, v = 0.0;
    for (std::size_t t = 0; t < 6; ++t)
      for (std::size_t f = 0; f < 7; ++f) m += y.at(0, c, t, f) / 42.0;
    for (std::size_t t = 0; t < 6; ++t)
      for (std::size_t f = 0; f < 7; ++f) v += std::pow(y.at(0, c, t, f) - m, 2) / 42.0;
    CHECK(std::abs(m) < 1e-12);
    CHECK(v == doctest::Approx(1.0).epsilon(1e-4));
  }
  // Constant maps stay finite thanks to the epsilon guard.
  const Tensor z = ops::instance_norm(ag::constant(Tensor({1, 2, 3, 3})),
                                      ag::constant(Tensor({2}, 1.0)),
                                      ag::constant(Tensor({2}, 0.5)))
                       .value();
  CHECK(z.all_finite());
  CHECK(z[0] == 0.5);
}

TEST_CASE("elu and relu values") {
  const Tensor x({1, 1, 1, 3}, std::vector<double>{-1.0, 0.0, 2.0});
  const Tensor e = ops::elu(ag::constant(x)).value();
  CHECK(e[0] == doctest::Approx(std::exp(-1.0) - 1.0));
  CHECK(e[1] == 0.0);
  CHECK(e[2] == 2.0);
  const Tensor r = ops::relu(ag::constant(x)).value();
  CHECK(r.storage() == std::vector<double>{0.0, 0.0, 2.0});
}

TEST_CASE("pooling and resize gradients") {
  CHECK(gradient_error([](auto& v) { return ops::adaptive_avg_pool(v[0], 3, 3); },
                       {random_tensor({1, 2, 7, 10})}) < kTol);
  CHECK(gradient_error([](auto& v) { return ops::bilinear_resize(v[0], 7, 10); },
                       {random_tensor({1, 2, 3, 3})}) < kTol);
}

TEST_CASE("adaptive pooling bins") {
  // 5 -> 2 uses bins [0, 3) and [2, 5).
  Tensor x({1, 1, 1, 5}, std::vector<double>{1, 2, 3, 4, 5});
  const Tensor y = ops::adaptive_avg_pool(ag::constant(x), 1, 2).value();
  CHECK(y[0] == doctest::Approx(2.0));
  CHECK(y[1] == doctest::Approx(4.0));
}

TEST_CASE("bilinear resize uses half-pixel centers") {
  // 2 -> 4 samples: output centers map to -0.25, 0.25, 0.75, 1.25 (clamped).
  Tensor x({1, 1, 1, 2}, std::vector<double>{0.0, 1.0});
  const Tensor y = ops::bilinear_resize(ag::constant(x), 1, 4).value();
  CHECK(y[0] == doctest::Approx(0.0));
  CHECK(y[1] == doctest::Approx(0.25));
  CHECK(y[2] == doctest::Approx(0.75));
  CHECK(y[3] == doctest::Approx(1.0));
}

TEST_CASE("reshaping and broadcast gradients") {
  CHECK(gradient_error([](auto& v) { return ops::mul_broadcast_time(v[0], v[1]); },
                       {random_tensor({1, 2, 3, 4}), random_tensor({1, 2, 1, 4})}) < kTol);
  CHECK(gradient_error([](auto& v) { return ops::from_sequence(ops::to_sequence(v[0]), 2, 4); },
                       {random_tensor({1, 2, 3, 4})}) < kTol);
  CHECK(gradient_error([](auto& v) { return ops::mean_time(v[0]); },
                       {random_tensor({1, 2, 3, 4})}) < kTol);
  CHECK(gradient_error([](auto& v) { return ops::concat_channels({v[0], v[1]}); },
                       {random_tensor({1, 2, 3, 4}), random_tensor({1, 1, 3, 4})}) < kTol);
  CHECK(gradient_error([](auto& v) { return ops::scale_bins(v[0], {1, 2, 3, 4, 5, 6, 7, 8}); },
                       {random_tensor({1, 2, 3, 4})}) < kTol);
}

TEST_CASE("to_sequence layout") {
  const Tensor x = random_tensor({1, 2, 3, 4});
  const Tensor s = ops::to_sequence(ag::constant(x)).value();
  REQUIRE(s.shape() == Shape{1, 8, 3, 1});
  CHECK(s.at(0, 1 * 4 + 3, 2, 0) == x.at(0, 1, 2, 3));
}

TEST_CASE("istft node gradient") {
  const StftConfig c{16, 4};
  CHECK(gradient_error([&](auto& v) { return ops::istft(v[0], 0, 0, c, 30); },
                       {random_tensor({1, 2, 8, 9})}) < kTol);
}

TEST_CASE("shape errors are reported") {
  CHECK_THROWS_AS(ops::concat_channels({ag::constant(random_tensor({1, 2, 3, 4})),
                                        ag::constant(random_tensor({1, 2, 5, 4}))}),
                  InvalidArgument);
  CHECK_THROWS_AS(ops::mul_broadcast_time(ag::constant(random_tensor({1, 2, 3, 4})),
                                          ag::constant(random_tensor({1, 2, 1, 5}))),
                  InvalidArgument);
}

TEST_CASE("backward frees nothing a leaf needs and accumulates across calls") {
  Tensor w = random_tensor({1, 1, 1, 3});
  Var p = ag::parameter(w, true);
  ag::backward(ops::scale(p, 2.0), Tensor({1, 1, 1, 3}, 1.0));
  ag::backward(ops::scale(p, 3.0), Tensor({1, 1, 1, 3}, 1.0));
  for (std::size_t i = 0; i < 3; ++i) CHECK(p.grad()[i] == 5.0);
}
