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
#include <string>
#include <vector>

#include "json.hpp"
#include "llmctl/cli/config.h"

namespace llmctl::cli {

struct RunOutput {
  std::string csv;                // per-request records
  nlohmann::ordered_json summary;
  std::vector<std::string> audit;  // invariant violations; empty when clean
  std::string events;             // JSON-lines trace, when enabled
};

RunOutput RunExperiment(const ExperimentConfig& config, sim::Policy policy, uint64_t seed);

// Writes <stem>.csv, <stem>.json and (if present) <stem>.events.jsonl.
void WriteRunOutput(const RunOutput& out, const std::filesystem::path& dir,
                    const std::string& stem);

// One row per policy, aggregated over seeds.
struct CompareRow {
  sim::Policy policy;
  std::vector<RunOutput> runs;
};

nlohmann::ordered_json CompareJson(const std::vector<CompareRow>& rows);
std::string CompareTable(const std::vector<CompareRow>& rows);

}  // namespace llmctl::cli
