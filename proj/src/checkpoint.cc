// Copyright 2026 The DPCCN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dpccn/checkpoint.h"

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "dpccn/error.h"

namespace dpccn {
namespace fs = std::filesystem;
namespace {

constexpr char kMagic[8] = {'D', 'P', 'C', 'C', 'N', 'C', 'K', 'P'};

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::endian::native == std::endian::little);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw DataError("checkpoint " + path + " is truncated");
  return v;
}

struct Entry {
  std::string name, group;
  const Tensor* tensor;
};

}  // namespace

void to_json(nlohmann::json& j, const MvnStats& s) {
  j = {{"planes", s.planes}, {"bins", s.bins}, {"mean", s.mean}, {"variance", s.variance}};
}

void from_json(const nlohmann::json& j, MvnStats& s) {
  s.planes = j.at("planes").get<std::size_t>();
  s.bins = j.at("bins").get<std::size_t>();
  s.mean = j.at("mean").get<std::vector<double>>();
  s.variance = j.at("variance").get<std::vector<double>>();
}

void to_json(nlohmann::json& j, const TrainState& s) {
  j = {{"task", s.task},
       {"epoch", s.epoch},
       {"step", s.step},
       {"lr", s.lr},
       {"best_dev", std::isfinite(s.best_dev) ? nlohmann::json(s.best_dev) : nlohmann::json()},
       {"best_epoch", s.best_epoch},
       {"stagnant_epochs", s.stagnant_epochs},
       {"history", s.history}};
}

void from_json(const nlohmann::json& j, TrainState& s) {
  s.task = j.at("task").get<std::string>();
  s.epoch = j.at("epoch").get<std::size_t>();
  s.step = j.at("step").get<std::size_t>();
  s.lr = j.at("lr").get<double>();
  const auto& b = j.at("best_dev");
  s.best_dev = b.is_null() ? -std::numeric_limits<double>::infinity() : b.get<double>();
  s.best_epoch = j.at("best_epoch").get<std::size_t>();
  s.stagnant_epochs = j.at("stagnant_epochs").get<std::size_t>();
  s.history = j.at("history");
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::vector<Entry> entries;
  for (const auto& [name, t] : ckpt.params.tensors) entries.push_back({name, "param", &t});
  for (const auto& [name, t] : ckpt.adam.m) entries.push_back({name, "adam_m", &t});
  for (const auto& [name, t] : ckpt.adam.v) entries.push_back({name, "adam_v", &t});

  nlohmann::json index = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& e : entries) {
    index.push_back(
        {{"name", e.name}, {"group", e.group}, {"shape", e.tensor->shape()}, {"offset", offset}});
    offset += e.tensor->size();
  }
  const nlohmann::json header{{"version", kCheckpointVersion},
                              {"config", ckpt.params.config},
                              {"config_hash", config_hash(ckpt.params.config)},
                              {"mvn", ckpt.params.mvn},
                              {"train_state", ckpt.state},
                              {"adam_step", ckpt.adam.step},
                              {"tensors", index}};
  const std::string text = header.dump();

  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint " + path);
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& e : entries)
      out.write(reinterpret_cast<const char*>(e.tensor->data()),
                static_cast<std::streamsize>(e.tensor->size() * sizeof(double)));
    if (!out) throw DataError("failed writing checkpoint " + path);
  }
  fs::rename(tmp, target);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw DataError(path + " is not a checkpoint");
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion)
    throw DataError("checkpoint " + path + " has unsupported version " + std::to_string(version));
  const auto length = get<std::uint64_t>(in, path);
  std::string text(length, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(length)))
    throw DataError("checkpoint " + path + " is truncated");

  Checkpoint ckpt;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
    ckpt.params.config = header.at("config").get<DpccnConfig>();
    ckpt.params.mvn = header.at("mvn").get<MvnStats>();
    ckpt.state = header.at("train_state").get<TrainState>();
    ckpt.adam.step = header.at("adam_step").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint " + path + " has a malformed header: " + e.what());
  }

  for (const auto& item : header.at("tensors")) {
    const auto name = item.at("name").get<std::string>();
    const auto group = item.at("group").get<std::string>();
    Tensor t(item.at("shape").get<Shape>());
    if (!in.read(reinterpret_cast<char*>(t.data()),
                 static_cast<std::streamsize>(t.size() * sizeof(double))))
      throw DataError("checkpoint " + path + " is truncated in tensor " + name);
    auto& dest = group == "param"    ? ckpt.params.tensors
                 : group == "adam_m" ? ckpt.adam.m
                 : group == "adam_v" ? ckpt.adam.v
                                     : throw DataError("unknown tensor group " + group);
    dest.emplace(name, std::move(t));
  }

  try {
    const auto layout = parameter_layout(ckpt.params.config);
    if (layout.size() != ckpt.params.tensors.size())
      throw DataError("checkpoint " + path + " holds " +
                      std::to_string(ckpt.params.tensors.size()) + " tensors, config declares " +
                      std::to_string(layout.size()));
    for (const auto& spec : layout) {
      auto it = ckpt.params.tensors.find(spec.name);
      if (it == ckpt.params.tensors.end() || it->second.shape() != spec.shape)
        throw DataError("checkpoint " + path + " is missing or misshapes " + spec.name);
    }
  } catch (const InvalidArgument& e) {
    throw DataError("checkpoint " + path + " has an invalid config: " + e.what());
  }
  return ckpt;
}

}  // namespace dpccn
