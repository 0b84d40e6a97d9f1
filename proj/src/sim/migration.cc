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

#include "llmctl/sim/migration.h"

#include "llmctl/common/error.h"

namespace llmctl::sim {

const char* MigrationPhaseName(MigrationPhase phase) {
  switch (phase) {
    case MigrationPhase::kDestLoading:
      return "DEST_LOADING";
    case MigrationPhase::kResuming:
      return "RESUMING";
    case MigrationPhase::kHandoff:
      return "HANDOFF";
    case MigrationPhase::kDone:
      return "DONE";
    case MigrationPhase::kAborted:
      return "ABORTED";
  }
  return "?";
}

const char* AbortReasonName(AbortReason reason) {
  switch (reason) {
    case AbortReason::kNone:
      return "none";
    case AbortReason::kCompleted:
      return "completed";
    case AbortReason::kNotConverged:
      return "not_converged";
    case AbortReason::kSrcFailed:
      return "src_failed";
    case AbortReason::kDestFailed:
      return "dest_failed";
  }
  return "?";
}

uint64_t GapThreshold(const ModelProfile& model, const MigrationOptions& options) {
  if (options.gap_threshold >= 0) return static_cast<uint64_t>(options.gap_threshold);
  int64_t a_ns = FromSeconds(model.resume_a).count();
  return a_ns <= 0 ? 0 : static_cast<uint64_t>(model.token_time().count() / a_ns);
}

SimTime ResumeRoundTime(const ModelProfile& model, uint64_t tokens, double network_bytes_per_s) {
  return TransferTime(tokens * kBytesPerToken, network_bytes_per_s) +
         FromSeconds(static_cast<long double>(model.resume_a) * tokens + model.resume_b);
}

MigrationEngine::MigrationEngine(EventLoop* loop, Cluster* cluster, Router* router,
                                 MigrationOptions options)
    : loop_(loop), cluster_(cluster), router_(router), options_(options) {
  if (options_.max_rounds < 1) throw ConfigError("max_rounds must be >= 1");
  if (!(options_.network_bytes_per_s > 0)) throw ConfigError("network bandwidth must be > 0");
}

std::optional<MigrationId> MigrationEngine::ActiveFor(SessionId session) const {
  auto it = active_.find(session);
  if (it == active_.end()) return std::nullopt;
  return it->second;
}

bool MigrationEngine::HoldsInstance(InstanceId instance) const {
  for (const auto& [sid, id] : active_) {
    if (migrations_.at(id).dest_instance == instance) return true;
  }
  return false;
}

void MigrationEngine::SetPhase(MigrationSession& ms, MigrationPhase phase) {
  ms.phase = phase;
  loop_->Note("MigrationPhase", {{"migration", ms.id},
                                 {"session", ms.session},
                                 {"phase", MigrationPhaseName(phase)},
                                 {"reason", AbortReasonName(ms.reason)}});
}

MigrationId MigrationEngine::Begin(SessionId session_id, ServerId dest, DecisionId decision) {
  Session& s = cluster_->session(session_id);
  if (s.status != SessionStatus::kRunning || !s.generating) {
    throw SchedulingError("session " + std::to_string(session_id) + " is not running");
  }
  if (active_.count(session_id)) {
    throw SchedulingError("session " + std::to_string(session_id) + " is already migrating");
  }
  if (dest == s.server) throw SchedulingError("migration destination equals source");
  const ModelProfile& model = cluster_->model(s.model);

  MigrationSession ms;
  ms.id = next_id_++;
  ms.decision = decision;
  ms.session = session_id;
  ms.model = s.model;
  ms.src_server = s.server;
  ms.src_instance = s.instance;
  ms.dest_server = dest;
  ms.gap_threshold = GapThreshold(model, options_);
  ms.started_at = loop_->now();

  if (const Instance* idle = cluster_->FindIdleInstance(s.model, dest)) {
    ms.dest_instance = idle->id;
    ms.dest_was_idle = true;
    cluster_->Claim(idle->id);
  } else {
    if (!cluster_->ReclaimSlots(dest, model.gpus, s.model)) {
      throw SchedulingError("server " + std::to_string(dest) + " cannot host " + s.model);
    }
    ms.dest_instance = cluster_->ReserveInstance(dest, s.model);
    cluster_->StartLoad(ms.dest_instance, decision);
  }
  s.status = SessionStatus::kMigrating;
  MigrationId id = ms.id;
  active_[session_id] = id;
  migrations_.emplace(id, std::move(ms));
  loop_->Note("MigrationBegin", {{"migration", id},
                                 {"session", session_id},
                                 {"src", migrations_.at(id).src_server},
                                 {"dest", dest},
                                 {"dest_idle", migrations_.at(id).dest_was_idle}});
  if (migrations_.at(id).dest_was_idle) {
    SetPhase(m(id), MigrationPhase::kResuming);
    StartRound(id, s.t_in + cluster_->TokensAt(s, loop_->now()));
  } else {
    SetPhase(m(id), MigrationPhase::kDestLoading);
  }
  return id;
}

bool MigrationEngine::OnLoadDone(const LoadTask& task) {
  for (auto& [sid, id] : active_) {
    MigrationSession& ms = m(id);
    if (ms.dest_instance != task.instance || ms.phase != MigrationPhase::kDestLoading) continue;
    const Session& s = cluster_->session(ms.session);
    SetPhase(ms, MigrationPhase::kResuming);
    StartRound(id, s.t_in + cluster_->TokensAt(s, loop_->now()));
    return true;
  }
  return false;
}

void MigrationEngine::StartRound(MigrationId id, uint64_t tokens) {
  MigrationSession& ms = m(id);
  const ModelProfile& model = cluster_->model(ms.model);
  ResumeRound r;
  r.round = static_cast<int>(ms.rounds.size()) + 1;
  r.tokens = tokens;
  r.start = loop_->now();
  r.end = r.start + ResumeRoundTime(model, tokens, options_.network_bytes_per_s);
  ms.rounds.push_back(r);
  ms.tokens_shipped += tokens;
  ms.pending = loop_->Schedule(r.end, EventKind::kResumeDone, [this, id] { OnResumeDone(id); },
                               {{"migration", id}, {"round", r.round}, {"tokens", tokens}});
}

void MigrationEngine::OnResumeDone(MigrationId id) {
  MigrationSession& ms = m(id);
  const Session& s = cluster_->session(ms.session);
  uint64_t produced = s.t_in + cluster_->TokensAt(s, loop_->now());
  uint64_t gap = produced - ms.tokens_shipped;
  ResumeRound& r = ms.rounds.back();
  r.gap_after = gap;
  loop_->Note("MigrationRound", {{"migration", id},
                                 {"round", r.round},
                                 {"tokens", r.tokens},
                                 {"duration_ns", (r.end - r.start).count()},
                                 {"gap", gap}});
  if (gap <= ms.gap_threshold) {
    SetPhase(ms, MigrationPhase::kHandoff);
    SimTime stop = cluster_->NextTokenBoundary(s, loop_->now());
    ms.pending = loop_->Schedule(stop, EventKind::kHandoff, [this, id] { OnHandoff(id); },
                                 {{"migration", id}});
    return;
  }
  if (static_cast<int>(ms.rounds.size()) >= options_.max_rounds) {
    Abort(id, AbortReason::kNotConverged);
    return;
  }
  StartRound(id, gap);
}

void MigrationEngine::OnHandoff(MigrationId id) {
  MigrationSession& ms = m(id);
  Session& s = cluster_->session(ms.session);
  ms.handoff_at = loop_->now();
  ms.tokens_at_handoff = cluster_->StopGeneration(s, loop_->now());
  // The full token list travels with the handoff; the few tokens past the
  // last resume round are recomputed within the destination's first step.
  SimTime transfer = TransferTime((s.t_in + ms.tokens_at_handoff) * kBytesPerToken,
                                  options_.network_bytes_per_s);
  ms.pending = loop_->Schedule(loop_->now() + transfer, EventKind::kHandoffDone,
                               [this, id] { OnHandoffDone(id); },
                               {{"migration", id}, {"tokens", s.t_in + ms.tokens_at_handoff}});
}

void MigrationEngine::OnHandoffDone(MigrationId id) {
  MigrationSession& ms = m(id);
  Session& s = cluster_->session(ms.session);
  SimTime pause = loop_->now() - ms.handoff_at;
  // The source slot is released at the instant the destination takes over.
  cluster_->ResumeGeneration(s, ms.dest_instance, loop_->now(), ms.tokens_at_handoff);
  cluster_->Unload(ms.src_instance);
  s.status = SessionStatus::kRunning;
  s.pause += pause;
  ++s.migrations;
  ms.resumed_at = loop_->now();
  router_->OnMigrated(s.id, ms.dest_server, pause);
  SetPhase(ms, MigrationPhase::kDone);
  Finish(id);
}

void MigrationEngine::OnSessionComplete(SessionId session) {
  auto it = active_.find(session);
  if (it == active_.end()) return;
  Abort(it->second, AbortReason::kCompleted);
}

void MigrationEngine::OnServerFailed(ServerId server) {
  std::vector<std::pair<MigrationId, AbortReason>> hits;
  for (const auto& [sid, id] : active_) {
    const MigrationSession& ms = migrations_.at(id);
    if (ms.src_server == server) hits.emplace_back(id, AbortReason::kSrcFailed);
    else if (ms.dest_server == server) hits.emplace_back(id, AbortReason::kDestFailed);
  }
  for (const auto& [id, reason] : hits) Abort(id, reason);
}

void MigrationEngine::Abort(MigrationId id, AbortReason reason) {
  MigrationSession& ms = m(id);
  if (ms.terminal()) return;
  loop_->Cancel(ms.pending);
  ms.reason = reason;
  Session& s = cluster_->session(ms.session);
  const bool dest_alive = cluster_->has_instance(ms.dest_instance);

  switch (reason) {
    case AbortReason::kCompleted:
    case AbortReason::kNotConverged:
      if (dest_alive) {
        if (cluster_->instance(ms.dest_instance).state == InstanceState::kLoading) {
          cluster_->Unload(ms.dest_instance);
        } else {
          // Resumed KV state is dropped; the loaded instance stays warm.
          cluster_->MarkIdle(ms.dest_instance);
        }
      }
      break;
    case AbortReason::kSrcFailed:
      if (dest_alive) cluster_->Unload(ms.dest_instance);
      break;
    case AbortReason::kDestFailed:
    case AbortReason::kNone:
      break;
  }
  if (reason == AbortReason::kNotConverged || reason == AbortReason::kDestFailed) {
    if (!s.generating && ms.handoff_at >= SimTime(0)) {
      // Stopped for a handoff that will not happen: continue on the source.
      SimTime pause = loop_->now() - ms.handoff_at;
      cluster_->ContinueGeneration(s, loop_->now());
      s.pause += pause;
      router_->AddPause(s.id, pause);
    }
    s.status = SessionStatus::kRunning;
  }
  SetPhase(ms, MigrationPhase::kAborted);
  Finish(id);
}

void MigrationEngine::Finish(MigrationId id) {
  MigrationSession& ms = m(id);
  active_.erase(ms.session);
  if (hooks_.on_finished) hooks_.on_finished(ms);
}

}  // namespace llmctl::sim
