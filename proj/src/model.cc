// Copyright 2026 The DPCCN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dpccn/model.h"

#include <cmath>
#include <cstdio>
#include <random>

#include "dpccn/error.h"
#include "dpccn/ops.h"

namespace dpccn {
namespace {

using ag::Var;

constexpr double kNormEps = 1e-5;

std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string stage_name(const char* part, std::size_t i) {
  return std::string(part) + "." + std::to_string(i);
}

class LayoutBuilder {
 public:
  void conv(const std::string& name, std::size_t out, std::size_t in, std::size_t kt,
            std::size_t kf) {
    specs_.push_back({name + ".weight", {out, in, kt, kf}, ParamKind::kWeight, in * kt * kf});
    specs_.push_back({name + ".bias", {out}, ParamKind::kBias, in * kt * kf});
  }
  void deconv(const std::string& name, std::size_t in, std::size_t out, std::size_t kt,
              std::size_t kf) {
    specs_.push_back({name + ".weight", {in, out, kt, kf}, ParamKind::kWeight, in * kt * kf});
    specs_.push_back({name + ".bias", {out}, ParamKind::kBias, in * kt * kf});
  }
  void norm(const std::string& name, std::size_t channels) {
    specs_.push_back({name + ".gain", {channels}, ParamKind::kGain, 0});
    specs_.push_back({name + ".offset", {channels}, ParamKind::kOffset, 0});
  }
  void dense(const std::string& prefix, const DpccnConfig& cfg, std::size_t channels) {
    const std::size_t g = cfg.growth(channels), k = cfg.conv_kernel;
    for (std::size_t l = 0; l < cfg.dense_layers; ++l) {
      conv(stage_name((prefix + ".layer").c_str(), l) + ".conv", g, channels + l * g, k, k);
      norm(stage_name((prefix + ".layer").c_str(), l) + ".norm", g);
    }
    conv(prefix + ".transition", channels, channels + cfg.dense_layers * g, 1, 1);
  }
  std::vector<ParamSpec> take() { return std::move(specs_); }

 private:
  std::vector<ParamSpec> specs_;
};

std::size_t decoder_out_channels(const DpccnConfig& cfg, std::size_t stage) {
  return stage == 0 ? cfg.pyramid.pre_in : cfg.encoder_stages[stage - 1].out_channels;
}

ops::ConvGeometry block_geometry(const DpccnConfig& cfg, std::size_t freq_stride) {
  ops::ConvGeometry g;
  g.kernel_t = g.kernel_f = cfg.conv_kernel;
  g.stride_f = freq_stride;
  g.pad_t = g.pad_f = cfg.conv_kernel / 2;
  return g;
}

// conv -> ELU -> IN
Var conv_block(const Var& x, ParameterBinder& bind, const std::string& prefix,
               const ops::ConvGeometry& geom) {
  Var y = ops::conv2d(x, bind(prefix + ".conv.weight"), bind(prefix + ".conv.bias"), geom);
  y = ops::elu(y);
  return ops::instance_norm(y, bind(prefix + ".norm.gain"), bind(prefix + ".norm.offset"),
                            kNormEps);
}

Var dense_block(const Var& x, ParameterBinder& bind, const std::string& prefix,
                const DpccnConfig& cfg) {
  std::vector<Var> features{x};
  const auto geom = block_geometry(cfg, 1);
  for (std::size_t l = 0; l < cfg.dense_layers; ++l) {
    Var in = features.size() == 1 ? x : ops::concat_channels(features);
    features.push_back(conv_block(in, bind, stage_name((prefix + ".layer").c_str(), l), geom));
  }
  Var all = features.size() == 1 ? x : ops::concat_channels(features);
  return ops::conv2d(all, bind(prefix + ".transition.weight"), bind(prefix + ".transition.bias"),
                     ops::ConvGeometry{});
}

Var pointwise(const Var& x, ParameterBinder& bind, const std::string& prefix) {
  return ops::conv2d(x, bind(prefix + ".weight"), bind(prefix + ".bias"), ops::ConvGeometry{});
}

}  // namespace

std::vector<std::size_t> TcnConfig::dilations() const {
  std::vector<std::size_t> d;
  for (std::size_t b = 0; b < blocks_per_layer; ++b) d.push_back(std::size_t{1} << b);
  return d;
}

std::size_t TcnConfig::receptive_field() const {
  std::size_t field = 1;
  for (std::size_t l = 0; l < num_layers; ++l)
    for (auto d : dilations()) field += (kernel - 1) * d;
  return field;
}

DpccnConfig DpccnConfig::separation() { return DpccnConfig{}; }

DpccnConfig DpccnConfig::extraction() {
  DpccnConfig cfg;
  cfg.num_sources = 1;
  cfg.speaker.enabled = true;
  return cfg;
}

DpccnConfig DpccnConfig::small(std::size_t num_sources, bool speaker_conditioned) {
  DpccnConfig cfg;
  cfg.num_sources = num_sources;
  cfg.encoder_stages = {{4, 1}, {8, 2}, {8, 2}, {8, 2}, {8, 2}, {8, 2}};
  cfg.dense_layers = 1;
  cfg.tcn.num_layers = 1;
  cfg.tcn.blocks_per_layer = 4;
  cfg.speaker.enabled = speaker_conditioned;
  cfg.speaker.conv_channels = 32;
  cfg.speaker.block_channels = 32;
  cfg.speaker.map_channels = 4;
  cfg.speaker.map_bins = 8;
  return cfg;
}

std::size_t DpccnConfig::growth(std::size_t stage_channels) const {
  return dense_growth > 0 ? dense_growth : std::max<std::size_t>(1, stage_channels / 2);
}

void validate_config(const DpccnConfig& cfg) {
  DPCCN_CHECK_ARG(cfg.num_sources >= 1 && cfg.num_sources <= 3,
                  "num_sources must be 1, 2 or 3");
  validate_stft_config(cfg.stft);
  DPCCN_CHECK_ARG(!cfg.encoder_stages.empty(), "encoder needs at least one stage");
  DPCCN_CHECK_ARG(cfg.conv_kernel % 2 == 1, "conv_kernel must be odd");
  for (const auto& s : cfg.encoder_stages)
    DPCCN_CHECK_ARG(s.out_channels >= 1 && s.freq_stride >= 1,
                    "encoder stages need positive channels and strides");
  DPCCN_CHECK_ARG(cfg.tcn.kernel % 2 == 1, "TCN kernel must be odd");
  DPCCN_CHECK_ARG(cfg.tcn.num_layers == 0 || cfg.tcn.blocks_per_layer >= 1,
                  "TCN layers need at least one block");
  const auto& p = cfg.pyramid;
  DPCCN_CHECK_ARG(!p.branch_scales.empty(), "pyramid needs at least one branch");
  for (auto s : p.branch_scales) DPCCN_CHECK_ARG(s >= 1, "pyramid scales must be positive");
  DPCCN_CHECK_ARG(p.pre_in == 32 && p.pre_out == 8 && p.post_in == 64 && p.post_out == 32,
                  "pyramid convolutions must be 32->8 per branch and 64->32 after concat");
  DPCCN_CHECK_ARG(p.pre_in + p.branch_scales.size() * p.pre_out == p.post_in,
                  "pyramid concatenation yields " +
                      std::to_string(p.pre_in + p.branch_scales.size() * p.pre_out) +
                      " channels, projection expects " + std::to_string(p.post_in));
  DPCCN_CHECK_ARG(p.post_out == p.pre_in, "pyramid must preserve its channel count");
  if (cfg.speaker.enabled) {
    const auto& s = cfg.speaker;
    DPCCN_CHECK_ARG(cfg.num_sources == 1, "speaker conditioning requires num_sources = 1");
    DPCCN_CHECK_ARG(s.block_channels == s.map_channels * s.map_bins,
                    "speaker block channels must equal map_channels * map_bins");
    DPCCN_CHECK_ARG(s.conv_kernel % 2 == 1 && s.block_kernel % 2 == 1 && s.map_kernel % 2 == 1,
                    "speaker encoder kernels must be odd");
  }
  std::size_t bins = cfg.stft.num_bins();
  for (const auto& s : cfg.encoder_stages) {
    DPCCN_CHECK_ARG(s.freq_stride == 1 || bins >= 2 * s.freq_stride - 1,
                    "frequency dimension " + std::to_string(bins) +
                        " too small for stride " + std::to_string(s.freq_stride));
    bins = (bins - 1) / s.freq_stride + 1;
  }
}

std::vector<std::size_t> encoder_bins(const DpccnConfig& cfg) {
  std::vector<std::size_t> bins;
  std::size_t f = cfg.stft.num_bins();
  for (const auto& s : cfg.encoder_stages) {
    f = (f - 1) / s.freq_stride + 1;
    bins.push_back(f);
  }
  return bins;
}

std::size_t fusion_width(const DpccnConfig& cfg) {
  return cfg.encoder_stages.back().out_channels * encoder_bins(cfg).back();
}

void to_json(nlohmann::json& j, const DpccnConfig& cfg) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : cfg.encoder_stages)
    stages.push_back({{"out_channels", s.out_channels}, {"freq_stride", s.freq_stride}});
  j = nlohmann::json{
      {"num_sources", cfg.num_sources},
      {"stft", {{"fft_size", cfg.stft.fft_size}, {"hop_size", cfg.stft.hop_size}}},
      {"encoder_stages", stages},
      {"conv_kernel", cfg.conv_kernel},
      {"dense_block", {{"num_layers", cfg.dense_layers}, {"growth_channels", cfg.dense_growth}}},
      {"tcn",
       {{"num_layers", cfg.tcn.num_layers},
        {"blocks_per_layer", cfg.tcn.blocks_per_layer},
        {"kernel", cfg.tcn.kernel}}},
      {"pyramid",
       {{"branch_scales", cfg.pyramid.branch_scales},
        {"pre_channels", {cfg.pyramid.pre_in, cfg.pyramid.pre_out}},
        {"post_channels", {cfg.pyramid.post_in, cfg.pyramid.post_out}}}},
      {"speaker_encoder",
       {{"enabled", cfg.speaker.enabled},
        {"conv_channels", cfg.speaker.conv_channels},
        {"conv_kernel", cfg.speaker.conv_kernel},
        {"block_channels", cfg.speaker.block_channels},
        {"block_kernel", cfg.speaker.block_kernel},
        {"map_channels", cfg.speaker.map_channels},
        {"map_bins", cfg.speaker.map_bins},
        {"map_kernel", cfg.speaker.map_kernel}}},
      {"init_seed", cfg.init_seed}};
}

void from_json(const nlohmann::json& j, DpccnConfig& cfg) {
  cfg = DpccnConfig{};
  cfg.num_sources = j.at("num_sources").get<std::size_t>();
  cfg.stft.fft_size = j.at("stft").at("fft_size").get<std::size_t>();
  cfg.stft.hop_size = j.at("stft").at("hop_size").get<std::size_t>();
  cfg.encoder_stages.clear();
  for (const auto& s : j.at("encoder_stages"))
    cfg.encoder_stages.push_back(
        {s.at("out_channels").get<std::size_t>(), s.at("freq_stride").get<std::size_t>()});
  cfg.conv_kernel = j.at("conv_kernel").get<std::size_t>();
  cfg.dense_layers = j.at("dense_block").at("num_layers").get<std::size_t>();
  cfg.dense_growth = j.at("dense_block").at("growth_channels").get<std::size_t>();
  const auto& t = j.at("tcn");
  cfg.tcn = {t.at("num_layers").get<std::size_t>(), t.at("blocks_per_layer").get<std::size_t>(),
             t.at("kernel").get<std::size_t>()};
  const auto& p = j.at("pyramid");
  cfg.pyramid.branch_scales = p.at("branch_scales").get<std::vector<std::size_t>>();
  cfg.pyramid.pre_in = p.at("pre_channels").at(0).get<std::size_t>();
  cfg.pyramid.pre_out = p.at("pre_channels").at(1).get<std::size_t>();
  cfg.pyramid.post_in = p.at("post_channels").at(0).get<std::size_t>();
  cfg.pyramid.post_out = p.at("post_channels").at(1).get<std::size_t>();
  const auto& s = j.at("speaker_encoder");
  cfg.speaker.enabled = s.at("enabled").get<bool>();
  cfg.speaker.conv_channels = s.at("conv_channels").get<std::size_t>();
  cfg.speaker.conv_kernel = s.at("conv_kernel").get<std::size_t>();
  cfg.speaker.block_channels = s.at("block_channels").get<std::size_t>();
  cfg.speaker.block_kernel = s.at("block_kernel").get<std::size_t>();
  cfg.speaker.map_channels = s.at("map_channels").get<std::size_t>();
  cfg.speaker.map_bins = s.at("map_bins").get<std::size_t>();
  cfg.speaker.map_kernel = s.at("map_kernel").get<std::size_t>();
  cfg.init_seed = j.at("init_seed").get<std::uint64_t>();
}

std::string config_hash(const DpccnConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(nlohmann::json(cfg).dump())));
  return buf;
}

const Tensor& ModelParameters::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw InvalidArgument("unknown parameter: " + name);
  return it->second;
}

std::size_t ModelParameters::count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors) n += t.size();
  return n;
}

bool ModelParameters::all_finite() const {
  for (const auto& [name, t] : tensors)
    if (!t.all_finite()) return false;
  return true;
}

std::vector<ParamSpec> parameter_layout(const DpccnConfig& cfg) {
  validate_config(cfg);
  LayoutBuilder b;
  const std::size_t k = cfg.conv_kernel, n = cfg.encoder_stages.size();
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t in = i == 0 ? 2 : cfg.encoder_stages[i - 1].out_channels;
    std::size_t out = cfg.encoder_stages[i].out_channels;
    std::string prefix = stage_name("encoder", i);
    b.conv(prefix + ".conv", out, in, k, k);
    b.norm(prefix + ".norm", out);
    b.dense(prefix + ".dense", cfg, out);
  }
  const std::size_t width = fusion_width(cfg);
  for (std::size_t l = 0; l < cfg.tcn.num_layers; ++l)
    for (std::size_t blk = 0; blk < cfg.tcn.blocks_per_layer; ++blk) {
      std::string prefix = stage_name(stage_name("tcn", l).c_str(), blk);
      b.norm(prefix + ".norm", width);
      b.conv(prefix + ".conv", width, width, cfg.tcn.kernel, 1);
    }
  for (std::size_t i = n; i-- > 0;) {
    std::size_t cat = 2 * cfg.encoder_stages[i].out_channels;
    std::size_t out = decoder_out_channels(cfg, i);
    std::string prefix = stage_name("decoder", i);
    b.dense(prefix + ".dense", cfg, cat);
    b.deconv(prefix + ".deconv", cat, out, k, k);
    b.norm(prefix + ".norm", out);
  }
  for (std::size_t br = 0; br < cfg.pyramid.branch_scales.size(); ++br)
    b.conv(stage_name("pyramid.branch", br), cfg.pyramid.pre_out, cfg.pyramid.pre_in, 1, 1);
  b.conv("pyramid.project", cfg.pyramid.post_out, cfg.pyramid.post_in, 1, 1);
  b.conv("output", 2 * cfg.num_sources, cfg.pyramid.post_out, 1, 1);
  if (cfg.speaker.enabled) {
    const auto& s = cfg.speaker;
    b.conv("speaker.conv", s.conv_channels, cfg.stft.num_bins(), s.conv_kernel, 1);
    b.conv("speaker.block.conv", s.block_channels, s.conv_channels, s.block_kernel, 1);
    b.norm("speaker.block.norm", s.block_channels);
    b.conv("speaker.map.conv", s.map_channels, s.map_channels, s.map_kernel, s.map_kernel);
    b.norm("speaker.map.norm", s.map_channels);
    b.conv("speaker.project", width, s.block_channels, 1, 1);
  }
  return b.take();
}

ModelParameters init_parameters(const DpccnConfig& cfg) {
  ModelParameters params;
  params.config = cfg;
  for (const auto& spec : parameter_layout(cfg)) {
    Tensor t(spec.shape);
    switch (spec.kind) {
      case ParamKind::kGain:
        t.fill(1.0);
        break;
      case ParamKind::kOffset:
        break;
      case ParamKind::kWeight:
      case ParamKind::kBias: {
        std::mt19937_64 rng(fnv1a(spec.name, cfg.init_seed * 0x9E3779B97F4A7C15ULL + 1));
        const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (auto& v : t.values()) v = dist(rng);
        break;
      }
    }
    params.tensors.emplace(spec.name, std::move(t));
  }
  params.mvn = identity_mvn(2, cfg.stft.num_bins());
  return params;
}

ParameterBinder::ParameterBinder(const ModelParameters& params, bool track_gradients)
    : params_(params), track_(track_gradients) {}

ag::Var ParameterBinder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Var v = ag::parameter(params_.at(name), track_);
  bound_.emplace(name, v);
  return v;
}

std::map<std::string, Tensor> ParameterBinder::gradients() const {
  std::map<std::string, Tensor> grads;
  for (const auto& [name, v] : bound_)
    if (!v.grad().empty()) grads.emplace(name, v.grad());
  return grads;
}

namespace graph {

EncoderVars encode(const Var& input, ParameterBinder& bind, const DpccnConfig& cfg) {
  const Tensor& x = input.value();
  DPCCN_CHECK_ARG(x.rank() == 4 && x.dim(1) == 2,
                  "encoder input must be (B, 2, frames, bins), got " + shape_string(x.shape()));
  DPCCN_CHECK_ARG(x.dim(3) == cfg.stft.num_bins(),
                  "encoder input has " + std::to_string(x.dim(3)) + " bins, config expects " +
                      std::to_string(cfg.stft.num_bins()));
  EncoderVars out;
  Var h = input;
  for (std::size_t i = 0; i < cfg.encoder_stages.size(); ++i) {
    const auto& stage = cfg.encoder_stages[i];
    DPCCN_CHECK_ARG(stage.freq_stride == 1 || h.shape()[3] >= 2 * stage.freq_stride - 1,
                    "frequency dimension too small for encoder stage " + std::to_string(i));
    std::string prefix = stage_name("encoder", i);
    h = conv_block(h, bind, prefix, block_geometry(cfg, stage.freq_stride));
    h = dense_block(h, bind, prefix + ".dense", cfg);
    out.skips.push_back(h);
  }
  out.bottleneck = h;
  return out;
}

Var tcn(const Var& bottleneck, ParameterBinder& bind, const DpccnConfig& cfg) {
  const Shape& s = bottleneck.shape();
  DPCCN_CHECK_ARG(s.size() == 4 && s[1] * s[3] == fusion_width(cfg),
                  "TCN input " + shape_string(s) + " does not match the configured bottleneck");
  Var seq = ops::to_sequence(bottleneck);
  for (std::size_t l = 0; l < cfg.tcn.num_layers; ++l) {
    auto dilations = cfg.tcn.dilations();
    for (std::size_t blk = 0; blk < dilations.size(); ++blk) {
      std::string prefix = stage_name(stage_name("tcn", l).c_str(), blk);
      ops::ConvGeometry g;
      g.kernel_t = cfg.tcn.kernel;
      g.dilation_t = dilations[blk];
      g.pad_t = (cfg.tcn.kernel / 2) * dilations[blk];
      Var y = ops::instance_norm(seq, bind(prefix + ".norm.gain"), bind(prefix + ".norm.offset"),
                                 kNormEps);
      y = ops::elu(y);
      y = ops::conv2d(y, bind(prefix + ".conv.weight"), bind(prefix + ".conv.bias"), g);
      seq = ops::add(seq, y);
    }
  }
  return ops::from_sequence(seq, s[1], s[3]);
}

Var decode(const Var& bottleneck, const std::vector<Var>& skips, ParameterBinder& bind,
           const DpccnConfig& cfg) {
  const std::size_t n = cfg.encoder_stages.size();
  DPCCN_CHECK_ARG(skips.size() == n, "decoder expects " + std::to_string(n) +
                                         " skip maps, got " + std::to_string(skips.size()));
  Var h = bottleneck;
  for (std::size_t i = n; i-- > 0;) {
    const Shape& hs = h.shape();
    const Shape& ss = skips[i].shape();
    DPCCN_CHECK_ARG(hs[0] == ss[0] && hs[2] == ss[2] && hs[3] == ss[3] &&
                        ss[1] == cfg.encoder_stages[i].out_channels,
                    "skip map " + std::to_string(i) + " " + shape_string(ss) +
                        " does not match decoder input " + shape_string(hs));
    // Target resolution is the input resolution of the mirrored encoder stage.
    std::size_t out_f = i == 0 ? cfg.stft.num_bins() : skips[i - 1].shape()[3];
    std::string prefix = stage_name("decoder", i);
    Var cat = ops::concat_channels({h, skips[i]});
    cat = dense_block(cat, bind, prefix + ".dense", cfg);
    auto geom = block_geometry(cfg, cfg.encoder_stages[i].freq_stride);
    h = ops::conv_transpose2d(cat, bind(prefix + ".deconv.weight"), bind(prefix + ".deconv.bias"),
                              geom, hs[2], out_f);
    h = ops::elu(h);
    h = ops::instance_norm(h, bind(prefix + ".norm.gain"), bind(prefix + ".norm.offset"), kNormEps);
  }
  return h;
}

Var pyramid(const Var& map, ParameterBinder& bind, const DpccnConfig& cfg) {
  const Shape& s = map.shape();
  DPCCN_CHECK_ARG(s.size() == 4 && s[1] == cfg.pyramid.pre_in,
                  "pyramid input must have " + std::to_string(cfg.pyramid.pre_in) +
                      " channels, got " + shape_string(s));
  std::vector<Var> parts{map};
  for (std::size_t br = 0; br < cfg.pyramid.branch_scales.size(); ++br) {
    std::size_t scale = cfg.pyramid.branch_scales[br];
    Var pooled = ops::adaptive_avg_pool(map, std::min(scale, s[2]), std::min(scale, s[3]));
    pooled = pointwise(pooled, bind, stage_name("pyramid.branch", br));
    parts.push_back(ops::bilinear_resize(pooled, s[2], s[3]));
  }
  return pointwise(ops::concat_channels(parts), bind, "pyramid.project");
}

std::vector<Var> forward(const Waveform& mix, ParameterBinder& bind,
                         const std::optional<Var>& conditioning) {
  const ModelParameters& params = bind.params();
  const DpccnConfig& cfg = params.config;
  DPCCN_CHECK_ARG(mix.size() >= cfg.stft.fft_size,
                  "mixture shorter than fft_size (" + std::to_string(cfg.stft.fft_size) +
                      " samples)");
  Var input = ag::constant(mixture_features(mix, params));
  auto enc = encode(input, bind, cfg);
  Var h = enc.bottleneck;
  if (conditioning) h = ops::mul_broadcast_time(h, *conditioning);
  h = tcn(h, bind, cfg);
  h = decode(h, enc.skips, bind, cfg);
  h = pyramid(h, bind, cfg);
  Var planes = pointwise(h, bind, "output");

  // Outputs live in the normalized domain; rescale each bin back to the
  // mixture's spectral scale before synthesis.
  const std::size_t bins = cfg.stft.num_bins();
  std::vector<double> factors(2 * cfg.num_sources * bins);
  for (std::size_t p = 0; p < 2 * cfg.num_sources; ++p)
    for (std::size_t f = 0; f < bins; ++f)
      factors[p * bins + f] = std::sqrt(params.mvn.variance[(p % 2) * bins + f]);
  planes = ops::scale_bins(planes, factors);

  std::vector<Var> out;
  for (std::size_t s = 0; s < cfg.num_sources; ++s)
    out.push_back(ops::istft(planes, 0, 2 * s, cfg.stft, mix.size()));
  return out;
}

}  // namespace graph

Tensor mixture_features(const Waveform& mix, const ModelParameters& params) {
  validate_waveform(mix);
  Tensor features = spectrogram_features(stft(mix, params.config.stft));
  const MvnStats& stats =
      params.mvn.empty() ? identity_mvn(2, params.config.stft.num_bins()) : params.mvn;
  return apply_mvn(features, stats);
}

EncoderOutput encode(const Tensor& input, const ModelParameters& params) {
  ParameterBinder bind(params, false);
  auto vars = graph::encode(ag::constant(input), bind, params.config);
  EncoderOutput out;
  out.bottleneck = vars.bottleneck.value();
  for (const auto& s : vars.skips) out.skips.push_back(s.value());
  return out;
}

Tensor tcn_bottleneck(const Tensor& bottleneck, const ModelParameters& params) {
  ParameterBinder bind(params, false);
  return graph::tcn(ag::constant(bottleneck), bind, params.config).value();
}

Tensor decode(const Tensor& bottleneck, const std::vector<Tensor>& skips,
              const ModelParameters& params) {
  ParameterBinder bind(params, false);
  std::vector<Var> skip_vars;
  for (const auto& s : skips) skip_vars.push_back(ag::constant(s));
  return graph::decode(ag::constant(bottleneck), skip_vars, bind, params.config).value();
}

Tensor pyramid_pool(const Tensor& map, const ModelParameters& params) {
  ParameterBinder bind(params, false);
  return graph::pyramid(ag::constant(map), bind, params.config).value();
}

std::vector<Waveform> separate(const Waveform& mix, const ModelParameters& params) {
  ParameterBinder bind(params, false);
  auto outs = graph::forward(mix, bind, std::nullopt);
  std::vector<Waveform> waves;
  for (const auto& v : outs) {
    const auto& vals = v.value().storage();
    waves.push_back(Waveform{vals, mix.sample_rate});
  }
  return waves;
}

}  // namespace dpccn
