// Copyright 2026 The DPCCN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DPCCN_SPEAKER_H_
#define DPCCN_SPEAKER_H_

// Speaker-conditioned extraction: an enrollment utterance is summarized into
// a per-(channel, bin) profile that scales the bottleneck before the TCN.

#include <string>
#include <vector>

#include "dpccn/autograd.h"
#include "dpccn/model.h"
#include "dpccn/signal.h"

namespace dpccn {

struct SpeakerEmbedding {
  std::vector<double> values;  // fusion_width(config) entries, c * F + f order
  std::string enrollment_id;
};

SpeakerEmbedding embed_speaker(const Waveform& enroll, const ModelParameters& params,
                               const std::string& enrollment_id = "");

Waveform extract(const Waveform& mix, const Waveform& enroll, const ModelParameters& params);

// Runs the conditioned network with a caller-supplied embedding.
Waveform extract_with_embedding(const Waveform& mix, const SpeakerEmbedding& embedding,
                                const ModelParameters& params);

nlohmann::json embedding_to_json(const SpeakerEmbedding& embedding);
SpeakerEmbedding embedding_from_json(const nlohmann::json& j);

namespace graph {

// Enrollment waveform to the (1, C, 1, F) conditioning map.
ag::Var speaker_embedding(const Waveform& enroll, ParameterBinder& bind);

}  // namespace graph
}  // namespace dpccn

#endif  // DPCCN_SPEAKER_H_
