// Copyright 2026 The DPCCN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "dpccn/error.h"
#include "dpccn/model.h"
#include "dpccn/objective.h"
#include "dpccn/ops.h"
#include "test_util.h"

using namespace dpccn;

namespace {

Tensor random_tensor(const Shape& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  Tensor t(s);
  for (auto& v : t.values()) v = n(rng);
  return t;
}

// Closed-form count from the stage table, written independently of the layout code.
std::size_t expected_parameters(const DpccnConfig& c) {
  const std::size_t k2 = c.conv_kernel * c.conv_kernel, L = c.dense_layers;
  auto dense = [&](std::size_t ch) {
    const std::size_t g = c.growth(ch);
    std::size_t n = 0;
    for (std::size_t l = 0; l < L; ++l) n += g * (ch + l * g) * k2 + g + 2 * g;
    return n + ch * (ch + L * g) + ch;
  };
  std::size_t n = 0, in = 2;
  for (const auto& s : c.encoder_stages) {
    n += s.out_channels * in * k2 + s.out_channels + 2 * s.out_channels + dense(s.out_channels);
    in = s.out_channels;
  }
  const std::size_t w = fusion_width(c);
  n += c.tcn.num_layers * c.tcn.blocks_per_layer * (2 * w + w * w * c.tcn.kernel + w);
  for (std::size_t i = 0; i < c.encoder_stages.size(); ++i) {
    const std::size_t cat = 2 * c.encoder_stages[i].out_channels;
    const std::size_t out = i == 0 ? 32 : c.encoder_stages[i - 1].out_channels;
    n += dense(cat) + cat * out * k2 + out + 2 * out;
  }
  n += c.pyramid.branch_scales.size() * (32 * 8 + 8) + 64 * 32 + 32;
  n += 32 * 2 * c.num_sources + 2 * c.num_sources;
  if (c.speaker.enabled) {
    const auto& s = c.speaker;
    n += s.conv_channels * c.stft.num_bins() * s.conv_kernel + s.conv_channels;
    n += s.block_channels * s.conv_channels * s.block_kernel + s.block_channels +
         2 * s.block_channels;
    n += s.map_channels * s.map_channels * s.map_kernel * s.map_kernel + 3 * s.map_channels;
    n += w * s.block_channels + w;
  }
  return n;
}

Waveform mixture_of_frames(std::size_t frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  // frames = 1 + L / hop
  return Waveform{testing::gaussian((frames - 1) * 128, rng, 0.1), 8000};
}

}  // namespace

TEST_CASE("default configuration geometry") {
  const auto cfg = DpccnConfig::separation();
  CHECK_NOTHROW(validate_config(cfg));
  CHECK(encoder_bins(cfg) == std::vector<std::size_t>{257, 129, 65, 33, 17, 9, 5});
  CHECK(fusion_width(cfg) == 640);
  CHECK(cfg.tcn.dilations().back() == 512);
  CHECK(cfg.tcn.receptive_field() == 4093);
  CHECK(cfg.tcn.receptive_field() == 1 + 2 * 2 * (1024 - 1));
  CHECK_NOTHROW(validate_config(DpccnConfig::extraction()));
  CHECK_NOTHROW(validate_config(DpccnConfig::small(2, false)));
  CHECK_NOTHROW(validate_config(DpccnConfig::small(1, true)));
}

TEST_CASE("validator rejects inconsistent configurations") {
  auto bad = [](auto mutate) {
    auto c = DpccnConfig::separation();
    mutate(c);
    return c;
  };
  CHECK_THROWS_AS(validate_config(bad([](auto& c) { c.pyramid.pre_out = 4; })), InvalidArgument);
  CHECK_THROWS_AS(validate_config(bad([](auto& c) { c.pyramid.post_in = 48; })), InvalidArgument);
  CHECK_THROWS_AS(validate_config(bad([](auto& c) { c.pyramid.branch_scales = {1, 2, 3}; })),
                  InvalidArgument);
  CHECK_THROWS_AS(validate_config(bad([](auto& c) { c.num_sources = 4; })), InvalidArgument);
  CHECK_THROWS_AS(validate_config(bad([](auto& c) { c.conv_kernel = 4; })), InvalidArgument);
  CHECK_THROWS_AS(validate_config(bad([](auto& c) { c.speaker.enabled = true; })),
                  InvalidArgument);
  CHECK_THROWS_AS(validate_config(bad([](auto& c) {
                    c.encoder_stages.assign(12, EncoderStage{8, 2});
                  })),
                  InvalidArgument);
  auto spk = DpccnConfig::extraction();
  spk.speaker.map_bins = 8;
  CHECK_THROWS_AS(validate_config(spk), InvalidArgument);
}

TEST_CASE("parameter count matches the closed form") {
  for (const auto& cfg : {DpccnConfig::separation(), DpccnConfig::extraction(),
                          DpccnConfig::small(2, false), DpccnConfig::small(1, true),
                          DpccnConfig::small(3, false)}) {
    const auto params = init_parameters(cfg);
    CHECK(params.count() == expected_parameters(cfg));
    std::set<std::string> names;
    for (const auto& spec : parameter_layout(cfg)) names.insert(spec.name);
    CHECK(names.size() == params.tensors.size());
  }
  CHECK(init_parameters(DpccnConfig::small(2, false)).count() == 87238);
  CHECK(init_parameters(DpccnConfig::small(1, true)).count() == 134024);
}

TEST_CASE("initialization is seeded") {
  auto cfg = DpccnConfig::small(2, false);
  const auto a = init_parameters(cfg), b = init_parameters(cfg);
  for (const auto& [name, t] : a.tensors) CHECK(t.storage() == b.at(name).storage());
  cfg.init_seed = 7;
  const auto c = init_parameters(cfg);
  bool differs = false;
  for (const auto& [name, t] : a.tensors) differs |= t.storage() != c.at(name).storage();
  CHECK(differs);
  for (const auto& spec : parameter_layout(cfg)) {
    const auto& t = a.at(spec.name);
    if (spec.kind == ParamKind::kGain) CHECK(t[0] == 1.0);
    if (spec.kind == ParamKind::kOffset) CHECK(t[0] == 0.0);
    if (spec.kind == ParamKind::kWeight)
      for (double v : t.storage()) CHECK(std::abs(v) <= 1.0 / std::sqrt(double(spec.fan_in)));
  }
  CHECK_THROWS(a.at("no.such.tensor"));
}

TEST_CASE("encoder shapes for the default table") {
  const auto params = init_parameters(DpccnConfig::separation());
  for (std::size_t t : {10u, 100u}) {
    const auto out = encode(random_tensor({1, 2, t, 257}, t), params);
    CHECK(out.bottleneck.shape() == Shape{1, 128, t, 5});
    REQUIRE(out.skips.size() == 7);
    CHECK(out.skips[0].shape() == Shape{1, 16, t, 257});
    CHECK(out.skips[3].shape() == Shape{1, 64, t, 33});
    CHECK(out.bottleneck.all_finite());
  }
  CHECK(encode(Tensor({1, 2, 10, 257}), params).bottleneck.all_finite());
  CHECK_THROWS_AS(encode(Tensor({1, 2, 10, 256}), params), InvalidArgument);
}

TEST_CASE("TCN preserves shape and is the identity with zero branch weights") {
  auto params = init_parameters(DpccnConfig::separation());
  const Tensor x = random_tensor({1, 128, 12, 5}, 1);
  CHECK(tcn_bottleneck(x, params).shape() == x.shape());
  for (auto& [name, t] : params.tensors)
    if (name.rfind("tcn.", 0) == 0 && name.find(".conv.") != std::string::npos) t.fill(0.0);
  CHECK(tcn_bottleneck(x, params).storage() == x.storage());
  CHECK_THROWS_AS(tcn_bottleneck(random_tensor({1, 64, 12, 5}, 2), params), InvalidArgument);
}

TEST_CASE("decoder mirrors the encoder") {
  const auto params = init_parameters(DpccnConfig::separation());
  const auto enc = encode(random_tensor({1, 2, 10, 257}, 3), params);
  const Tensor y = decode(enc.bottleneck, enc.skips, params);
  CHECK(y.shape() == Shape{1, 32, 10, 257});
  auto fewer = enc.skips;
  fewer.pop_back();
  CHECK_THROWS_AS(decode(enc.bottleneck, fewer, params), InvalidArgument);
  auto swapped = enc.skips;
  std::swap(swapped[1], swapped[2]);
  CHECK_THROWS_AS(decode(enc.bottleneck, swapped, params), InvalidArgument);
}

TEST_CASE("pyramid pooling") {
  const auto params = init_parameters(DpccnConfig::small(2, false));
  for (std::size_t t : {10u, 100u})
    CHECK(pyramid_pool(random_tensor({1, 32, t, 257}, t), params).shape() ==
          Shape{1, 32, t, 257});
  // Smaller than the largest scale: pooling clamps instead of failing.
  CHECK(pyramid_pool(random_tensor({1, 32, 2, 4}, 4), params).shape() == Shape{1, 32, 2, 4});
  CHECK_THROWS_AS(pyramid_pool(random_tensor({1, 16, 4, 4}, 5), params), InvalidArgument);

  const Tensor c({1, 32, 9, 20}, 0.75);
  const Tensor y = pyramid_pool(c, params);
  for (std::size_t ch = 0; ch < 32; ++ch)
    for (std::size_t i = 0; i < 9 * 20; ++i)
      CHECK(y[ch * 180 + i] == doctest::Approx(y[ch * 180]).epsilon(1e-12));
  // Output is affine in the constant.
  const Tensor y0 = pyramid_pool(Tensor({1, 32, 9, 20}, 0.0), params);
  const Tensor y2 = pyramid_pool(Tensor({1, 32, 9, 20}, 1.5), params);
  for (std::size_t i = 0; i < y.size(); i += 97)
    CHECK(y[i] - y0[i] == doctest::Approx((y2[i] - y0[i]) / 2).epsilon(1e-9));

  // The 1x1 branch is the channel mean broadcast over the map.
  const Tensor x = random_tensor({1, 32, 7, 30}, 6);
  const Tensor b = ops::bilinear_resize(ops::adaptive_avg_pool(ag::constant(x), 1, 1), 7, 30)
                       .value();
  for (std::size_t ch = 0; ch < 32; ++ch) {
    double mean = 0.0;
    for (std::size_t i = 0; i < 210; ++i) mean += x[ch * 210 + i] / 210.0;
    for (std::size_t i = 0; i < 210; ++i) CHECK(std::abs(b[ch * 210 + i] - mean) < 1e-6);
  }
}

TEST_CASE("separate returns S waveforms of the input length") {
  const auto params = init_parameters(DpccnConfig::separation());
  for (std::size_t t : {10u, 100u, 313u}) {
    const auto mix = mixture_of_frames(t, t);
    REQUIRE(num_frames(mix.size(), params.config.stft) == t);
    const auto outs = separate(mix, params);
    REQUIRE(outs.size() == 2);
    for (const auto& o : outs) {
      CHECK(o.size() == mix.size());
      CHECK(Tensor({o.size()}, o.samples).all_finite());
    }
  }
  const auto small = init_parameters(DpccnConfig::small(3, false));
  std::mt19937_64 rng(9);
  const Waveform odd{testing::gaussian(1001, rng, 0.1), 8000};
  const auto outs = separate(odd, small);
  CHECK(outs.size() == 3);
  CHECK(outs[2].size() == 1001);
  CHECK_THROWS_AS(separate(Waveform{std::vector<double>(511, 0.1), 8000}, small),
                  InvalidArgument);
}

TEST_CASE("four seconds of input give finite output and stable reruns") {
  const auto params = init_parameters(DpccnConfig::separation());
  std::mt19937_64 rng(10);
  const Waveform mix{testing::gaussian(32000, rng, 0.3), 8000};
  const auto a = separate(mix, params);
  for (const auto& o : a) CHECK(Tensor({o.size()}, o.samples).all_finite());
  const auto b = separate(mix, params);
  CHECK(a[0].samples == b[0].samples);
  CHECK(a[1].samples == b[1].samples);
}

TEST_CASE("every parameter receives a finite gradient") {
  const auto params = init_parameters(DpccnConfig::small(2, false));
  std::mt19937_64 rng(11);
  const Waveform s1{testing::gaussian(2048, rng, 0.1), 8000},
      s2{testing::gaussian(2048, rng, 0.1), 8000};
  ParameterBinder bind(params, true);
  const auto outs = graph::forward(testing::add(s1, s2), bind, std::nullopt);
  ag::backward(upit_loss(outs, {s1, s2}).loss);
  const auto grads = bind.gradients();
  CHECK(grads.size() == params.tensors.size());
  for (const auto& [name, g] : grads) CHECK_MESSAGE(g.all_finite(), name);
}

TEST_CASE("config JSON and hash round trip") {
  auto cfg = DpccnConfig::small(1, true);
  cfg.init_seed = 42;
  nlohmann::json j = cfg;
  const auto back = j.get<DpccnConfig>();
  CHECK(back == cfg);
  CHECK(config_hash(back) == config_hash(cfg));
  CHECK(config_hash(cfg).size() == 16);
  cfg.tcn.kernel = 5;
  CHECK(config_hash(cfg) != config_hash(back));
}
