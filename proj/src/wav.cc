// Copyright 2026 The DPCCN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dpccn/wav.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include <spdlog/spdlog.h>

#include "dpccn/error.h"

namespace dpccn {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T read_le(const unsigned char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T>
void put_le(std::vector<unsigned char>* out, T v) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  out->insert(out->end(), bytes, bytes + sizeof(T));
}

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open wav file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw DataError("not a RIFF/WAVE file: " + path);

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    auto size = read_le<std::uint32_t>(chunk + 4);
    std::size_t body = pos + 8;
    std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) throw DataError("truncated fmt chunk: " + path);
      format = read_le<std::uint16_t>(chunk + 8);
      channels = read_le<std::uint16_t>(chunk + 10);
      rate = read_le<std::uint32_t>(chunk + 12);
      bits = read_le<std::uint16_t>(chunk + 22);
      if (format == kFormatExtensible && avail >= 26)
        format = read_le<std::uint16_t>(chunk + 32);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = avail;
    }
    pos = body + size + (size & 1);
  }
  if (data == nullptr || format == 0) throw DataError("missing fmt or data chunk: " + path);
  if (channels != 1)
    throw DataError("only mono audio is supported (" + std::to_string(channels) +
                    " channels): " + path);

  Waveform wave;
  wave.sample_rate = static_cast<int>(rate);
  if (format == kFormatPcm && bits == 16) {
    wave.samples.resize(data_size / 2);
    for (std::size_t i = 0; i < wave.samples.size(); ++i)
      wave.samples[i] = read_le<std::int16_t>(data + 2 * i) / 32768.0;
  } else if (format == kFormatFloat && bits == 32) {
    wave.samples.resize(data_size / 4);
    for (std::size_t i = 0; i < wave.samples.size(); ++i)
      wave.samples[i] = read_le<float>(data + 4 * i);
  } else {
    throw DataError("unsupported sample format (format " + std::to_string(format) +
                    ", " + std::to_string(bits) + " bits): " + path);
  }
  return wave;
}

void write_wav(const std::string& path, const Waveform& wave, WavFormat format) {
  DPCCN_CHECK_ARG(wave.sample_rate > 0, "sample rate must be positive");
  const std::uint16_t bits = format == WavFormat::kPcm16 ? 16 : 32;
  const std::uint16_t tag = format == WavFormat::kPcm16 ? kFormatPcm : kFormatFloat;
  const std::uint32_t block = bits / 8;
  const auto data_size = static_cast<std::uint32_t>(wave.samples.size() * block);

  std::vector<unsigned char> out;
  out.reserve(44 + data_size);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_le<std::uint32_t>(&out, 36 + data_size);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_le<std::uint32_t>(&out, 16);
  put_le<std::uint16_t>(&out, tag);
  put_le<std::uint16_t>(&out, 1);
  put_le<std::uint32_t>(&out, static_cast<std::uint32_t>(wave.sample_rate));
  put_le<std::uint32_t>(&out, static_cast<std::uint32_t>(wave.sample_rate) * block);
  put_le<std::uint16_t>(&out, static_cast<std::uint16_t>(block));
  put_le<std::uint16_t>(&out, bits);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_le<std::uint32_t>(&out, data_size);

  std::size_t clipped = 0;
  for (double v : wave.samples) {
    double c = std::clamp(v, -1.0, 1.0);
    if (c != v || !std::isfinite(v)) ++clipped;
    if (!std::isfinite(v)) c = 0.0;
    if (format == WavFormat::kPcm16) {
      auto q = static_cast<std::int16_t>(std::lround(std::clamp(c * 32768.0, -32768.0, 32767.0)));
      put_le<std::int16_t>(&out, q);
    } else {
      put_le<float>(&out, static_cast<float>(c));
    }
  }
  if (clipped > 0)
    spdlog::warn("{}: clipped {} of {} samples outside [-1, 1]", path, clipped,
                 wave.samples.size());

  auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write wav file: " + path);
  os.write(reinterpret_cast<const char*>(out.data()),
           static_cast<std::streamsize>(out.size()));
}

}  // namespace dpccn
