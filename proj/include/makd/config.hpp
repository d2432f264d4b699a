/*
Copyright 2026 The makd Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "makd/annotate.hpp"
#include "makd/data.hpp"
#include "makd/report.hpp"
#include "makd/train.hpp"

namespace makd::config {

// Flat sectioned key/value configuration:
//
//   [train]
//   epochs = 60
//   alpha = 1
//
// Keys are addressed as "section.key". Only known keys are accepted.
class Config {
 public:
  static Config parse(std::string_view text);
  static Config load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  // "section.key=value"
  void apply_override(const std::string& assignment);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::size_t> get_sizes(const std::string& key,
                                     const std::vector<std::size_t>& fallback) const;

  const std::map<std::string, std::string>& entries() const noexcept { return entries_; }

  // Sorted "key=value" lines; the digest is their SHA-256.
  std::string canonical() const;
  std::string digest() const;

 private:
  std::map<std::string, std::string> entries_;
};

const std::vector<std::string>& known_keys();

data::SyntheticConfig synthetic_config(const Config& c);
// Epoch count decides the default milestones (150/180/210 of 240, rescaled).
train::TrainConfig train_config(const Config& c);
annotate::EndpointConfig endpoint_config(const Config& c);
report::BenchmarkSpec benchmark_spec(const Config& c);

// Writes "<digest>\n" followed by the canonical text to dir/config.digest.
void write_digest(const Config& c, const std::filesystem::path& dir);

}  // namespace makd::config
