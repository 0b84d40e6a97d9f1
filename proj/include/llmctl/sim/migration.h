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

#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "llmctl/sim/cluster.h"
#include "llmctl/sim/event_loop.h"
#include "llmctl/sim/router.h"

namespace llmctl::sim {

enum class MigrationPhase { kDestLoading, kResuming, kHandoff, kDone, kAborted };
const char* MigrationPhaseName(MigrationPhase phase);

enum class AbortReason { kNone, kCompleted, kNotConverged, kSrcFailed, kDestFailed };
const char* AbortReasonName(AbortReason reason);

struct MigrationOptions {
  // Tokens left unshipped at handoff. Negative selects the default: the
  // number of tokens whose recompute fits in one token time.
  int64_t gap_threshold = -1;
  int max_rounds = 8;
  double network_bytes_per_s = 1.25e9;
};

struct ResumeRound {
  int round = 0;
  uint64_t tokens = 0;  // tokens in this resume request
  SimTime start{0};
  SimTime end{0};
  uint64_t gap_after = 0;  // tokens the source produced meanwhile
};

struct MigrationSession {
  MigrationId id = 0;
  DecisionId decision = 0;
  SessionId session = 0;
  std::string model;
  ServerId src_server = kNoServer;
  InstanceId src_instance = 0;
  ServerId dest_server = kNoServer;
  InstanceId dest_instance = 0;
  MigrationPhase phase = MigrationPhase::kDestLoading;
  bool dest_was_idle = false;
  uint64_t gap_threshold = 0;
  std::vector<ResumeRound> rounds;
  uint64_t tokens_shipped = 0;  // cumulative, including t_in
  SimTime started_at{0};
  SimTime handoff_at{-1};   // source stopped
  SimTime resumed_at{-1};   // destination generating
  uint64_t tokens_at_handoff = 0;
  AbortReason reason = AbortReason::kNone;
  EventHandle pending;

  bool terminal() const {
    return phase == MigrationPhase::kDone || phase == MigrationPhase::kAborted;
  }
};

// Gap threshold for a model under `options`.
uint64_t GapThreshold(const ModelProfile& model, const MigrationOptions& options);
// Duration of one resume round carrying `tokens`: token transfer plus
// a * tokens + b_r.
SimTime ResumeRoundTime(const ModelProfile& model, uint64_t tokens, double network_bytes_per_s);

// Multi-round token-based live migration, one state machine per migrated
// session, driven by event-loop callbacks.
class MigrationEngine {
 public:
  struct Hooks {
    // Fired once per migration on reaching DONE or ABORTED.
    std::function<void(const MigrationSession&)> on_finished;
  };

  MigrationEngine(EventLoop* loop, Cluster* cluster, Router* router, MigrationOptions options);
  void set_hooks(Hooks hooks) { hooks_ = std::move(hooks); }
  const MigrationOptions& options() const { return options_; }

  // Starts migrating a running session to `dest`. Uses an idle instance of
  // the model on dest when one exists, otherwise reserves slots there and
  // queues a load. Throws SchedulingError if dest cannot host the model.
  MigrationId Begin(SessionId session, ServerId dest, DecisionId decision);

  // Returns true if the load belonged to a migration.
  bool OnLoadDone(const LoadTask& task);
  void OnSessionComplete(SessionId session);
  void OnServerFailed(ServerId server);

  const MigrationSession& get(MigrationId id) const { return migrations_.at(id); }
  const std::map<MigrationId, MigrationSession>& all() const { return migrations_; }
  std::optional<MigrationId> ActiveFor(SessionId session) const;
  // Destination instances currently held by migrations.
  bool HoldsInstance(InstanceId instance) const;

 private:
  MigrationSession& m(MigrationId id) { return migrations_.at(id); }
  void SetPhase(MigrationSession& ms, MigrationPhase phase);
  void StartRound(MigrationId id, uint64_t tokens);
  void OnResumeDone(MigrationId id);
  void OnHandoff(MigrationId id);
  void OnHandoffDone(MigrationId id);
  void Abort(MigrationId id, AbortReason reason);
  void Finish(MigrationId id);

  EventLoop* loop_;
  Cluster* cluster_;
  Router* router_;
  MigrationOptions options_;
  Hooks hooks_;
  MigrationId next_id_ = 1;
  std::map<MigrationId, MigrationSession> migrations_;
  std::map<SessionId, MigrationId> active_;
};

}  // namespace llmctl::sim
