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
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "llmctl/sim/simulation.h"
#include "llmctl/sim/workload.h"

namespace llmctl::cli {

struct ModelEntry {
  sim::ModelProfile profile;
  double weight = 1.0;  // popularity in generated traces
};

struct ExperimentConfig {
  std::vector<sim::ServerConfig> servers;
  std::vector<ModelEntry> models;
  // Either a generated trace or explicit requests (or both, appended).
  std::optional<sim::TraceSpec> trace;
  std::vector<sim::Request> requests;
  std::vector<sim::WarmInstance> warm;
  // Replaces every server's SSD contents with a popularity-weighted
  // round-robin placement.
  bool auto_placement = false;
  sim::Policy policy = sim::Policy::kLiveMigration;
  std::vector<uint64_t> seeds = {1};
  sim::SchedulerOptions scheduler;
  sim::MigrationOptions migration;
  double timeout_s = 300;
  // Initial scheduler beliefs are the true bandwidths times this factor.
  double belief_scale = 1.0;
  std::vector<sim::FailureEvent> failures;
  sim::CrashPoint crash_point = sim::CrashPoint::kNone;
  int crash_nth = 1;
  bool write_events = false;
};

// Parses and validates a config; unknown keys are errors.
ExperimentConfig ParseExperimentConfig(const nlohmann::json& j);
ExperimentConfig LoadExperimentConfig(const std::filesystem::path& path);

// The simulation for one (policy, seed) run of the experiment.
sim::SimulationConfig BuildSimulation(const ExperimentConfig& config, sim::Policy policy,
                                      uint64_t seed);

}  // namespace llmctl::cli
