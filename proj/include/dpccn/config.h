// Copyright 2026 The DPCCN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef DPCCN_CONFIG_H_
#define DPCCN_CONFIG_H_

// Layered key-value configuration.
//
//   # comment
//   [train]
//   lr = 0.001        -> key "train.lr"
//
// Files are applied in order, later keys win; `set("train.lr=5e-4")` applies
// command line overrides on top. Malformed input throws InvalidArgument.

#include <map>
#include <set>
#include <string>
#include <vector>

#include "dpccn/corpus.h"

namespace dpccn {

// Environment variable naming the directory relative data paths resolve against.
constexpr const char* kDataRootEnv = "DPCCN_DATA_ROOT";

class KeyValueConfig {
 public:
  void load_file(const std::string& path);
  void load_string(const std::string& text, const std::string& origin = "<string>");
  // "section.key=value"
  void set(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  // "lo,hi"
  Interval get_interval(const std::string& key, const Interval& fallback) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }
  // Keys that were set but never read.
  std::vector<std::string> unused() const;

 private:
  const std::string* find(const std::string& key) const;

  std::map<std::string, std::string> entries_;
  mutable std::set<std::string> read_;
};

// Value of DPCCN_DATA_ROOT, or empty.
std::string data_root();
// Absolute paths pass through; relative ones are joined to the data root
// when it is set.
std::string resolve_data_path(const std::string& path);

Interval parse_interval(const std::string& text);

}  // namespace dpccn

#endif  // DPCCN_CONFIG_H_
