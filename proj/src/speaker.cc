// Copyright 2026 The DPCCN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dpccn/speaker.h"

#include "dpccn/error.h"
#include "dpccn/ops.h"

namespace dpccn {
namespace {

using ag::Var;

void check_conditioned(const DpccnConfig& cfg) {
  DPCCN_CHECK_ARG(cfg.speaker.enabled && cfg.num_sources == 1,
                  "model is not a speaker-conditioned extraction network");
}

// Enrollment magnitude as a (1, bins, frames, 1) sequence, without MVN.
Tensor enrollment_features(const Waveform& enroll, const StftConfig& cfg) {
  validate_waveform(enroll);
  DPCCN_CHECK_ARG(enroll.size() >= cfg.fft_size,
                  "enrollment shorter than fft_size (" + std::to_string(cfg.fft_size) +
                      " samples)");
  auto spec = stft(enroll, cfg);
  auto mag = magnitude(spec);
  Tensor out({1, spec.bins, spec.frames, 1});
  for (std::size_t t = 0; t < spec.frames; ++t)
    for (std::size_t f = 0; f < spec.bins; ++f) out.at(0, f, t, 0) = mag[t * spec.bins + f];
  return out;
}

}  // namespace

namespace graph {

Var speaker_embedding(const Waveform& enroll, ParameterBinder& bind) {
  const DpccnConfig& cfg = bind.params().config;
  check_conditioned(cfg);
  const auto& s = cfg.speaker;
  Var x = ag::constant(enrollment_features(enroll, cfg.stft));

  ops::ConvGeometry g1;
  g1.kernel_t = s.conv_kernel;
  g1.pad_t = s.conv_kernel / 2;
  x = ops::relu(ops::conv2d(x, bind("speaker.conv.weight"), bind("speaker.conv.bias"), g1));

  ops::ConvGeometry g2;
  g2.kernel_t = s.block_kernel;
  g2.pad_t = s.block_kernel / 2;
  x = ops::relu(
      ops::conv2d(x, bind("speaker.block.conv.weight"), bind("speaker.block.conv.bias"), g2));
  x = ops::channel_layer_norm(x, bind("speaker.block.norm.gain"),
                              bind("speaker.block.norm.offset"));

  x = ops::from_sequence(x, s.map_channels, s.map_bins);
  ops::ConvGeometry g3;
  g3.kernel_t = g3.kernel_f = s.map_kernel;
  g3.pad_t = g3.pad_f = s.map_kernel / 2;
  x = ops::elu(ops::conv2d(x, bind("speaker.map.conv.weight"), bind("speaker.map.conv.bias"), g3));
  x = ops::instance_norm(x, bind("speaker.map.norm.gain"), bind("speaker.map.norm.offset"), 1e-5);

  x = ops::to_sequence(ops::mean_time(x));
  x = ops::conv2d(x, bind("speaker.project.weight"), bind("speaker.project.bias"),
                  ops::ConvGeometry{});
  return ops::from_sequence(x, cfg.encoder_stages.back().out_channels, encoder_bins(cfg).back());
}

}  // namespace graph

SpeakerEmbedding embed_speaker(const Waveform& enroll, const ModelParameters& params,
                               const std::string& enrollment_id) {
  ParameterBinder bind(params, false);
  Var e = graph::speaker_embedding(enroll, bind);
  return SpeakerEmbedding{e.value().storage(), enrollment_id};
}

Waveform extract_with_embedding(const Waveform& mix, const SpeakerEmbedding& embedding,
                                const ModelParameters& params) {
  const DpccnConfig& cfg = params.config;
  check_conditioned(cfg);
  const std::size_t channels = cfg.encoder_stages.back().out_channels;
  const std::size_t bins = encoder_bins(cfg).back();
  DPCCN_CHECK_ARG(embedding.values.size() == channels * bins,
                  "embedding has " + std::to_string(embedding.values.size()) +
                      " entries, fusion site expects " + std::to_string(channels * bins));
  ParameterBinder bind(params, false);
  Var e = ag::constant(Tensor({1, channels, 1, bins}, embedding.values));
  auto outs = graph::forward(mix, bind, e);
  return Waveform{outs.front().value().storage(), mix.sample_rate};
}

Waveform extract(const Waveform& mix, const Waveform& enroll, const ModelParameters& params) {
  DPCCN_CHECK_ARG(!enroll.samples.empty(), "extraction requires an enrollment utterance");
  ParameterBinder bind(params, false);
  Var e = graph::speaker_embedding(enroll, bind);
  auto outs = graph::forward(mix, bind, e);
  return Waveform{outs.front().value().storage(), mix.sample_rate};
}

nlohmann::json embedding_to_json(const SpeakerEmbedding& embedding) {
  return {{"enrollment_id", embedding.enrollment_id}, {"values", embedding.values}};
}

SpeakerEmbedding embedding_from_json(const nlohmann::json& j) {
  return SpeakerEmbedding{j.at("values").get<std::vector<double>>(),
                          j.value("enrollment_id", std::string{})};
}

}  // namespace dpccn
