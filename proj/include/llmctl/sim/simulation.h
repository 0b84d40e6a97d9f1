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
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "llmctl/sim/cluster.h"
#include "llmctl/sim/event_loop.h"
#include "llmctl/sim/migration.h"
#include "llmctl/sim/router.h"
#include "llmctl/sim/scheduler.h"
#include "llmctl/sim/status_store.h"

namespace llmctl::sim {

struct FailureEvent {
  SimTime at{0};
  ServerId server = kNoServer;
};

struct WarmInstance {
  ServerId server = kNoServer;
  std::string model;
};

struct SimulationConfig {
  std::vector<ServerConfig> servers;
  std::vector<ModelProfile> models;
  std::vector<Request> requests;
  std::vector<WarmInstance> warm;  // loaded and idle at time zero
  SchedulerOptions scheduler;
  MigrationOptions migration;
  SimTime timeout = std::chrono::seconds(300);
  // Initial scheduler beliefs; servers not listed start from the truth.
  std::map<ServerId, Bandwidths> beliefs;
  std::vector<FailureEvent> failures;
  CrashPoint crash_point = CrashPoint::kNone;
  int crash_nth = 1;
  std::filesystem::path status_path;  // empty: in-memory store
  bool trace = false;
  bool audit_each_event = false;
};

// Wires cluster, router, migration engine and scheduler onto one event loop
// and replays a request trace.
class Simulation {
 public:
  explicit Simulation(SimulationConfig config);

  // Runs to quiescence. Returns the number of events fired.
  size_t Run();
  // Runs events up to and including `t`.
  void RunUntil(SimTime t);

  EventLoop& loop() { return loop_; }
  Cluster& cluster() { return *cluster_; }
  Router& router() { return *router_; }
  MigrationEngine& migration() { return *migration_; }
  Scheduler& scheduler() { return *scheduler_; }
  StatusStore& store() { return store_; }
  const SimulationConfig& config() const { return config_; }
  int crashes() const { return crashes_; }

  // Cluster, router and scheduler invariants, plus end-of-run checks when
  // the loop is quiescent. Empty when consistent.
  std::vector<std::string> Audit() const;
  // First violation seen by per-event auditing, if enabled.
  const std::vector<std::string>& event_audit() const { return event_audit_; }

  // Per-server model residency (GPU instances, DRAM, SSD).
  nlohmann::ordered_json Residency() const;
  nlohmann::ordered_json Counters() const;

 private:
  template <class F>
  void WithScheduler(F&& f);
  void Restart();
  void Fail(ServerId server);

  SimulationConfig config_;
  EventLoop loop_;
  StatusStore store_;
  CrashPlan crash_;
  std::unique_ptr<Cluster> cluster_;
  std::unique_ptr<Router> router_;
  std::unique_ptr<MigrationEngine> migration_;
  std::unique_ptr<Scheduler> scheduler_;
  int crashes_ = 0;
  std::vector<std::string> event_audit_;
};

}  // namespace llmctl::sim
