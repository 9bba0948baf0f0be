// Copyright 2026 The DPCCN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DPCCN_CHECKPOINT_H_
#define DPCCN_CHECKPOINT_H_

// Checkpoint layout (all integers little endian):
//
//   bytes 0-7    "DPCCNCKP"
//   u32          format version
//   u64          header length N
//   N bytes      UTF-8 JSON header: config, mvn, train_state, adam_step and
//                a tensor index of {name, group, shape, offset}
//   f64 * ...    tensor payloads, concatenated in index order
//
// group is "param", "adam_m" or "adam_v"; offsets count doubles from the
// start of the payload. Readers accept any file with the same version and
// ignore unknown header keys.

#include <cstdint>
#include <limits>
#include <map>
#include <string>

#include "dpccn/model.h"
#include "json.hpp"

namespace dpccn {

constexpr std::uint32_t kCheckpointVersion = 1;

struct AdamState {
  std::size_t step = 0;
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
};

struct TrainState {
  std::string task = "ss";
  std::size_t epoch = 0;  // completed epochs
  std::size_t step = 0;   // optimizer steps taken
  double lr = 1e-3;
  double best_dev = -std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  std::size_t stagnant_epochs = 0;
  nlohmann::json history = nlohmann::json::array();  // one object per epoch
};

struct Checkpoint {
  ModelParameters params;
  AdamState adam;
  TrainState state;
};

void to_json(nlohmann::json& j, const MvnStats& s);
void from_json(const nlohmann::json& j, MvnStats& s);
void to_json(nlohmann::json& j, const TrainState& s);
void from_json(const nlohmann::json& j, TrainState& s);

// Writes to a temporary file and renames it into place.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
// Throws DataError on a corrupt, truncated or inconsistent file.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace dpccn

#endif  // DPCCN_CHECKPOINT_H_
