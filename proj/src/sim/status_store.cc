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

#include "llmctl/sim/status_store.h"

#include <fstream>
#include <sstream>

#include "llmctl/common/error.h"

namespace llmctl::sim {

StatusStore::StatusStore(std::filesystem::path path) : path_(std::move(path)) {
  std::ofstream(path_, std::ios::trunc);
}

void StatusStore::Append(const nlohmann::ordered_json& record) {
  std::string line = record.dump();
  if (!path_.empty()) {
    std::ofstream out(path_, std::ios::app);
    out << line << '\n';
    out.flush();
    if (!out) throw std::runtime_error("status store write failed: " + path_.string());
  }
  log_.push_back(std::move(line));
}

void StatusStore::Put(const std::string& key, Value value) {
  nlohmann::ordered_json record;
  record["op"] = "put";
  record["key"] = key;
  record["value"] = value;
  Append(record);
  data_[key] = std::move(value);
}

void StatusStore::Erase(const std::string& key) {
  nlohmann::ordered_json record;
  record["op"] = "erase";
  record["key"] = key;
  Append(record);
  data_.erase(key);
}

std::optional<StatusStore::Value> StatusStore::Get(const std::string& key) const {
  auto it = data_.find(key);
  if (it == data_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::pair<std::string, StatusStore::Value>> StatusStore::Scan(
    const std::string& prefix) const {
  std::vector<std::pair<std::string, Value>> out;
  for (auto it = data_.lower_bound(prefix); it != data_.end(); ++it) {
    if (it->first.compare(0, prefix.size(), prefix) != 0) break;
    out.emplace_back(it->first, it->second);
  }
  return out;
}

void StatusStore::Apply(const nlohmann::json& record) {
  const std::string op = record.at("op").get<std::string>();
  const std::string key = record.at("key").get<std::string>();
  if (op == "put") {
    data_[key] = Value::parse(record.at("value").dump());
  } else if (op == "erase") {
    data_.erase(key);
  } else {
    throw FormatError("unknown status store op '" + op + "'");
  }
}

StatusStore StatusStore::FromLog(const std::vector<std::string>& lines) {
  StatusStore store;
  for (size_t i = 0; i < lines.size(); ++i) {
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::parse_error&) {
      // Only the last record can be torn by a crash mid-write.
      if (i + 1 == lines.size()) break;
      throw FormatError("corrupt status store record at line " + std::to_string(i + 1));
    }
    store.Apply(record);
    store.log_.push_back(lines[i]);
  }
  return store;
}

StatusStore StatusStore::Open(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LookupError("cannot open status store " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  StatusStore store = FromLog(lines);
  store.path_ = path;
  return store;
}

StatusStore::Value StatusStore::Snapshot() const {
  Value out = Value::object();
  for (const auto& [k, v] : data_) out[k] = v;
  return out;
}

}  // namespace llmctl::sim
