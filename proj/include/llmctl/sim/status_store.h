// Copyright 2026 The llmctl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace llmctl::sim {

// Durable key-value store for scheduler state. Every write is appended to a
// JSON-lines log (and to `path`, when set) before it becomes visible, so a
// recovering scheduler sees exactly the writes that completed. A torn last
// line is ignored on replay.
class StatusStore {
 public:
  using Value = nlohmann::ordered_json;

  StatusStore() = default;
  explicit StatusStore(std::filesystem::path path);

  void Put(const std::string& key, Value value);
  void Erase(const std::string& key);
  std::optional<Value> Get(const std::string& key) const;
  // Entries whose key starts with `prefix`, in key order.
  std::vector<std::pair<std::string, Value>> Scan(const std::string& prefix) const;

  size_t writes() const { return log_.size(); }
  const std::vector<std::string>& log() const { return log_; }
  const std::filesystem::path& path() const { return path_; }

  // Rebuilds the store from log lines / a log file.
  static StatusStore FromLog(const std::vector<std::string>& lines);
  static StatusStore Open(const std::filesystem::path& path);

  // The current state as one JSON object (key -> value).
  Value Snapshot() const;

 private:
  void Apply(const nlohmann::json& record);
  void Append(const nlohmann::ordered_json& record);

  std::filesystem::path path_;
  std::map<std::string, Value> data_;
  std::vector<std::string> log_;
};

}  // namespace llmctl::sim
