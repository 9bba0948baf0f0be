// Copyright 2026 The DPCCN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DPCCN_WAV_H_
#define DPCCN_WAV_H_

#include <string>

#include "dpccn/signal.h"

namespace dpccn {

enum class WavFormat { kPcm16, kFloat32 };

// Mono RIFF/WAVE, 16-bit PCM or 32-bit IEEE float. Samples are returned as
// amplitudes in [-1, 1]. Throws DataError on malformed or multi-channel files.
Waveform read_wav(const std::string& path);

// Samples outside [-1, 1] are clipped and a warning is logged.
void write_wav(const std::string& path, const Waveform& wave,
               WavFormat format = WavFormat::kFloat32);

}  // namespace dpccn

#endif  // DPCCN_WAV_H_
