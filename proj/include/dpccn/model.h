// Copyright 2026 The DPCCN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DPCCN_MODEL_H_
#define DPCCN_MODEL_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dpccn/autograd.h"
#include "dpccn/signal.h"
#include "dpccn/tensor.h"
#include "json.hpp"

namespace dpccn {

struct EncoderStage {
  std::size_t out_channels = 16;
  std::size_t freq_stride = 1;
  bool operator==(const EncoderStage&) const = default;
};

struct TcnConfig {
  std::size_t num_layers = 2;
  std::size_t blocks_per_layer = 10;  // dilations 1, 2, ..., 2^(blocks-1)
  std::size_t kernel = 3;
  bool operator==(const TcnConfig&) const = default;

  std::vector<std::size_t> dilations() const;
  // Frames seen by one output frame through the whole stack.
  std::size_t receptive_field() const;
};

struct PyramidConfig {
  std::vector<std::size_t> branch_scales{1, 2, 3, 6};
  std::size_t pre_in = 32;   // per-branch projection before upsampling
  std::size_t pre_out = 8;
  std::size_t post_in = 64;  // projection after concatenation
  std::size_t post_out = 32;
  bool operator==(const PyramidConfig&) const = default;
};

struct SpeakerEncoderConfig {
  bool enabled = false;
  std::size_t conv_channels = 256;
  std::size_t conv_kernel = 5;
  std::size_t block_channels = 256;
  std::size_t block_kernel = 3;
  std::size_t map_channels = 16;  // block_channels = map_channels * map_bins
  std::size_t map_bins = 16;
  std::size_t map_kernel = 3;
  bool operator==(const SpeakerEncoderConfig&) const = default;
};

struct DpccnConfig {
  std::size_t num_sources = 2;
  StftConfig stft;
  std::vector<EncoderStage> encoder_stages{{16, 1}, {32, 2}, {32, 2}, {64, 2},
                                           {64, 2}, {128, 2}, {128, 2}};
  std::size_t conv_kernel = 3;
  std::size_t dense_layers = 3;
  std::size_t dense_growth = 0;  // 0 selects half the stage width
  TcnConfig tcn;
  PyramidConfig pyramid;
  SpeakerEncoderConfig speaker;
  std::uint64_t init_seed = 0;
  bool operator==(const DpccnConfig&) const = default;

  // Full-size speech separation network (S = 2).
  static DpccnConfig separation();
  // Full-size speaker-conditioned extraction network (S = 1).
  static DpccnConfig extraction();
  // Width-reduced variant for desk-scale training and tests.
  static DpccnConfig small(std::size_t num_sources, bool speaker_conditioned);

  std::size_t growth(std::size_t stage_channels) const;
};

// Throws InvalidArgument when an invariant is violated.
void validate_config(const DpccnConfig& cfg);

// Frequency bins after each encoder stage for the configured STFT.
std::vector<std::size_t> encoder_bins(const DpccnConfig& cfg);
// Channel count at the speaker fusion site (bottleneck channels x bins).
std::size_t fusion_width(const DpccnConfig& cfg);
// Stable 64-bit digest of the canonical JSON form, as hex.
std::string config_hash(const DpccnConfig& cfg);

void to_json(nlohmann::json& j, const DpccnConfig& cfg);
void from_json(const nlohmann::json& j, DpccnConfig& cfg);

struct ModelParameters {
  DpccnConfig config;
  std::map<std::string, Tensor> tensors;
  MvnStats mvn;

  const Tensor& at(const std::string& name) const;
  std::size_t count() const;
  bool all_finite() const;
};

enum class ParamKind { kWeight, kBias, kGain, kOffset };

struct ParamSpec {
  std::string name;
  Shape shape;
  ParamKind kind;
  std::size_t fan_in;
};

// Every parameter the config declares, in a fixed order.
std::vector<ParamSpec> parameter_layout(const DpccnConfig& cfg);

// Uniform(+-1/sqrt(fan_in)) kernels and biases, unit gains, zero offsets.
// Each tensor draws from a stream keyed by (init_seed, name).
ModelParameters init_parameters(const DpccnConfig& cfg);

// Exposes parameter tensors to one computation. With tracking enabled,
// gradients accumulate on the bound leaves and are read back afterwards.
class ParameterBinder {
 public:
  ParameterBinder(const ModelParameters& params, bool track_gradients);

  ag::Var operator()(const std::string& name);
  const ModelParameters& params() const { return params_; }
  // Gradient for every bound parameter that received one.
  std::map<std::string, Tensor> gradients() const;

 private:
  const ModelParameters& params_;
  bool track_;
  std::map<std::string, ag::Var> bound_;
};

struct EncoderOutput {
  Tensor bottleneck;
  std::vector<Tensor> skips;
};

// input: (B, 2, frames, bins) normalized RI planes.
EncoderOutput encode(const Tensor& input, const ModelParameters& params);
Tensor tcn_bottleneck(const Tensor& bottleneck, const ModelParameters& params);
Tensor decode(const Tensor& bottleneck, const std::vector<Tensor>& skips,
              const ModelParameters& params);
Tensor pyramid_pool(const Tensor& map, const ModelParameters& params);

// Mixture features as fed to the encoder: normalized RI planes.
Tensor mixture_features(const Waveform& mix, const ModelParameters& params);

// Full forward pass; returns num_sources waveforms of the input length.
std::vector<Waveform> separate(const Waveform& mix, const ModelParameters& params);

// Differentiable building blocks shared by inference, training and the
// speaker-conditioned network.
namespace graph {

struct EncoderVars {
  ag::Var bottleneck;
  std::vector<ag::Var> skips;
};

EncoderVars encode(const ag::Var& input, ParameterBinder& bind,
                   const DpccnConfig& cfg);
ag::Var tcn(const ag::Var& bottleneck, ParameterBinder& bind,
            const DpccnConfig& cfg);
ag::Var decode(const ag::Var& bottleneck, const std::vector<ag::Var>& skips,
               ParameterBinder& bind, const DpccnConfig& cfg);
ag::Var pyramid(const ag::Var& map, ParameterBinder& bind,
                const DpccnConfig& cfg);

// Mixture waveform to per-source waveform Vars of the mixture's length.
// When conditioning is given ((1, C, 1, F) at the bottleneck), the encoder
// output is multiplied by it before the TCN.
std::vector<ag::Var> forward(const Waveform& mix, ParameterBinder& bind,
                             const std::optional<ag::Var>& conditioning);

}  // namespace graph
}  // namespace dpccn

#endif  // DPCCN_MODEL_H_
