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

#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "llmctl/sim/cluster.h"
#include "llmctl/sim/estimator.h"
#include "llmctl/sim/event_loop.h"
#include "llmctl/sim/migration.h"
#include "llmctl/sim/router.h"
#include "llmctl/sim/status_store.h"

namespace llmctl::sim {

enum class Policy { kAvailability, kLocality, kPreemption, kLiveMigration };
const char* PolicyName(Policy policy);
Policy ParsePolicy(const std::string& name);

enum class Action { kLoadDram, kLoadSsd, kLoadNet, kMigrateThenLoad, kPreemptThenLoad, kPend };
const char* ActionName(Action action);
Action ParseAction(const std::string& name);
Action LoadAction(LoadSource source);

// How a preempted session catches up after its model is reloaded elsewhere:
// regenerate the lost output token by token, or recompute it in one resume.
enum class PreemptRecovery { kRegenerate, kResume };
const char* PreemptRecoveryName(PreemptRecovery mode);
PreemptRecovery ParsePreemptRecovery(const std::string& name);

enum class CrashPoint { kNone, kBeforePersist, kAfterPersist, kAfterInstruct, kBeforeCompletionPersist };
const char* CrashPointName(CrashPoint point);
CrashPoint ParseCrashPoint(const std::string& name);

// Thrown when an injected crash fires; the owner discards the scheduler and
// starts a new one from the status store.
class SchedulerCrash : public std::runtime_error {
 public:
  explicit SchedulerCrash(CrashPoint point)
      : std::runtime_error(std::string("scheduler crash at ") + CrashPointName(point)),
        point_(point) {}
  CrashPoint point() const { return point_; }

 private:
  CrashPoint point_;
};

// Fires once, at the nth time execution passes `point`. Owned outside the
// scheduler so that it survives restarts.
struct CrashPlan {
  CrashPoint point = CrashPoint::kNone;
  int nth = 1;
  int seen = 0;
  bool fired = false;
};

struct VictimPlan {
  SessionId session = 0;
  std::string model;
  ServerId dest = kNoServer;
  bool dest_idle = false;
  SimTime load{0};    // believed load time on dest (0 if idle)
  SimTime resume{0};  // estimated resume time
  SimTime ready{0};   // relative to the decision
};

struct Plan {
  Action action = Action::kPend;
  ServerId server = kNoServer;
  LoadSource source = LoadSource::kNet;
  SimTime estimate{0};  // startup estimate relative to now
  SimTime load{0};      // believed load time of the requested model
  std::vector<VictimPlan> victims;
  SimTime victims_ready{0};
};

enum class DecisionState { kPersisted, kInstructed, kLoadDone, kDone, kVoid };
const char* DecisionStateName(DecisionState state);

struct Decision {
  DecisionId id = 0;
  RequestId request = 0;
  std::string model;
  Plan plan;
  DecisionState state = DecisionState::kPersisted;
  SimTime created_at{0};
  InstanceId instance = 0;  // instance loading the requested model
  std::vector<MigrationId> migrations;

  bool live() const { return state != DecisionState::kDone && state != DecisionState::kVoid; }
};

nlohmann::ordered_json DecisionToJson(const Decision& d);
Decision DecisionFromJson(const nlohmann::json& j);

struct SchedulerOptions {
  Policy policy = Policy::kLiveMigration;
  uint64_t seed = 0;
  double ema_alpha = 0.3;
  PreemptRecovery preempt_recovery = PreemptRecovery::kRegenerate;
  int max_victims = 4;
};

struct SchedulerStats {
  uint64_t decisions = 0;
  uint64_t migrate_decisions = 0;
  uint64_t preempt_decisions = 0;
  uint64_t pends = 0;
  uint64_t voided = 0;
  uint64_t recoveries = 0;
};

// Cluster-wide loading scheduler. All durable state goes through the status
// store; everything else can be rebuilt by Recover().
class Scheduler {
 public:
  Scheduler(EventLoop* loop, Cluster* cluster, Router* router, MigrationEngine* migration,
            StatusStore* store, SchedulerOptions options, CrashPlan* crash = nullptr);

  // Fresh start with initial bandwidth beliefs (persisted).
  void Initialize(const std::map<ServerId, Bandwidths>& beliefs);
  // Restart after a crash: reload state, reconcile with the servers, resend
  // undelivered instructions and re-derive pending requests.
  void Recover();

  Plan SelectServer(const std::string& model, RequestId request = 0) const;
  LoadEstimate EstimateLoad(const std::string& model, ServerId server) const;
  MigrationEstimate EstimateMigration(SessionId session) const;
  // Believed remaining time of the server's loading queue.
  SimTime QueueDelay(ServerId server) const;

  // Event inputs.
  void OnRequest(RequestId request);
  void OnLoadDone(const LoadTask& task, bool migration_load);
  void OnMigrationFinished(const MigrationSession& ms);
  void OnSlotsReleased(ServerId server);
  void OnTimeout(RequestId request);
  void OnServerFailed(ServerId server);

  const BandwidthBeliefs& beliefs() const { return beliefs_; }
  const std::map<DecisionId, Decision>& decisions() const { return decisions_; }
  const std::set<std::pair<SimTime, RequestId>>& pending() const { return pending_; }
  const SchedulerStats& stats() const { return stats_; }
  const SchedulerOptions& options() const { return options_; }

  // Every delivered decision was delivered exactly once; empty when so.
  std::vector<std::string> Audit() const;

 private:
  struct Victim {
    SessionId session;
    std::string model;
    int slots;
    SimTime resume;
  };

  int Available(ServerId server, const std::string& model) const;
  int Promised(ServerId server) const;
  bool BetterThan(const Plan& a, const Plan& b) const;
  bool PlanMigration(ServerId server, const std::string& model, int need, Plan* plan) const;
  ServerId LocalityServer(const std::string& model) const;

  void Commit(RequestId request, const Plan& plan);
  void Instruct(Decision& d);
  void Preempt(Decision& d, const VictimPlan& v);
  void ResumePreempted(Session& s, SimTime ready);
  void StartRequestedLoad(Decision& d);
  void FinalizeLoad(Decision& d);
  void AfterMigrations(Decision& d);
  void Void(Decision& d);
  void Sync(Decision& d);
  void Persist(const Decision& d);
  // Keeps awaiting_ in step with a decision's state.
  void Track(const Decision& d);
  void PersistBeliefs(ServerId server);
  void RetryPending();
  void MaybeCrash(CrashPoint point);

  EventLoop* loop_;
  Cluster* cluster_;
  Router* router_;
  MigrationEngine* migration_;
  StatusStore* store_;
  SchedulerOptions options_;
  CrashPlan* crash_;
  BandwidthBeliefs beliefs_;
  std::map<DecisionId, Decision> decisions_;
  // Live MIGRATE_THEN_LOAD decisions whose own load has not started yet.
  std::set<DecisionId> awaiting_;
  std::set<std::pair<SimTime, RequestId>> pending_;
  DecisionId next_decision_ = 1;
  SchedulerStats stats_;
  bool retrying_ = false;
};

}  // namespace llmctl::sim
