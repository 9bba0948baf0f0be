// Copyright 2026 The DPCCN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dpccn/config.h"

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dpccn/error.h"

namespace dpccn {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end)
    throw InvalidArgument("config key '" + key + "': cannot parse '" + text + "'");
  return value;
}

}  // namespace

void KeyValueConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  load_string(ss.str(), path);
}

void KeyValueConfig::load_string(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line, section;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3)
        throw InvalidArgument(origin + ":" + std::to_string(n) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos || trim(line.substr(0, eq)).empty())
      throw InvalidArgument(origin + ":" + std::to_string(n) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    set(section.empty() ? key : section + "." + key, trim(line.substr(eq + 1)));
  }
}

void KeyValueConfig::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || trim(assignment.substr(0, eq)).empty())
    throw InvalidArgument("override '" + assignment + "' is not of the form key=value");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  entries_[key] = value;
}

bool KeyValueConfig::has(const std::string& key) const { return entries_.count(key) > 0; }

const std::string* KeyValueConfig::find(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return nullptr;
  read_.insert(key);
  return &it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  const auto* v = find(key);
  return v ? *v : fallback;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  const auto* v = find(key);
  return v ? parse_number<double>(key, *v) : fallback;
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const {
  const auto* v = find(key);
  return v ? parse_number<long long>(key, *v) : fallback;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  throw InvalidArgument("config key '" + key + "': expected a boolean, got '" + *v + "'");
}

Interval KeyValueConfig::get_interval(const std::string& key, const Interval& fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  try {
    return parse_interval(*v);
  } catch (const InvalidArgument& e) {
    throw InvalidArgument("config key '" + key + "': " + e.what());
  }
}

std::vector<std::string> KeyValueConfig::unused() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_)
    if (!read_.count(k)) out.push_back(k);
  return out;
}

Interval parse_interval(const std::string& text) {
  const auto sep = text.find_first_of(",:");
  if (sep == std::string::npos) throw InvalidArgument("expected 'lo,hi', got '" + text + "'");
  Interval r{parse_number<double>("interval", trim(text.substr(0, sep))),
             parse_number<double>("interval", trim(text.substr(sep + 1)))};
  if (r.lo > r.hi) throw InvalidArgument("interval '" + text + "' is empty");
  return r;
}

std::string data_root() {
  const char* v = std::getenv(kDataRootEnv);
  return v ? v : "";
}

std::string resolve_data_path(const std::string& path) {
  namespace fs = std::filesystem;
  if (path.empty() || fs::path(path).is_absolute()) return path;
  const std::string root = data_root();
  return root.empty() ? path : (fs::path(root) / path).string();
}

}  // namespace dpccn
