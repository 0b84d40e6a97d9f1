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

#include "llmctl/sim/router.h"

#include <algorithm>
#include <cstdio>

#include "llmctl/common/error.h"

namespace llmctl::sim {

const char* RequestStatusName(RequestStatus status) {
  switch (status) {
    case RequestStatus::kWaiting:
      return "WAITING";
    case RequestStatus::kRunning:
      return "RUNNING";
    case RequestStatus::kCompleted:
      return "COMPLETED";
    case RequestStatus::kTimedOut:
      return "TIMED_OUT";
    case RequestStatus::kFailed:
      return "FAILED";
  }
  return "?";
}

SimTime RequestRecord::startup(SimTime timeout_after) const {
  if (status == RequestStatus::kTimedOut) return timeout_after;
  if (first_token < SimTime(0)) return SimTime(-1);
  return first_token - request.arrival;
}

Router::Router(EventLoop* loop, Cluster* cluster, SimTime timeout)
    : loop_(loop), cluster_(cluster), timeout_(timeout) {}

RequestRecord& Router::mutable_record(RequestId id) {
  auto it = records_.find(id);
  if (it == records_.end()) throw LookupError("unknown request " + std::to_string(id));
  return it->second;
}

const RequestRecord& Router::record(RequestId id) const {
  return const_cast<Router*>(this)->mutable_record(id);
}

void Router::Arrive(const Request& request) {
  if (!cluster_->has_model(request.model)) {
    throw LookupError("request " + std::to_string(request.id) + " names unknown model " +
                      request.model);
  }
  RequestRecord rec;
  rec.request = request;
  RequestId id = request.id;
  if (!records_.emplace(id, rec).second) {
    throw SchedulingError("duplicate request id " + std::to_string(id));
  }
  waiting_.insert({request.arrival, id});
  mutable_record(id).timeout = loop_->Schedule(
      request.arrival + timeout_, EventKind::kTimeout, [this, id] { TimeOut(id); },
      {{"request", id}});
  Dispatch(id);
}

void Router::Dispatch(RequestId id) {
  const RequestRecord& rec = record(id);
  if (rec.status != RequestStatus::kWaiting) return;
  if (const Instance* inst = cluster_->FindIdleInstance(rec.request.model)) {
    Bind(id, inst->id);
    return;
  }
  if (hooks_.on_needs_load) hooks_.on_needs_load(id);
}

SessionId Router::Bind(RequestId id, InstanceId instance) {
  RequestRecord& rec = mutable_record(id);
  if (rec.status != RequestStatus::kWaiting) {
    throw SchedulingError("request " + std::to_string(id) + " is not waiting");
  }
  SessionId sid = cluster_->StartSession(instance, id, rec.request.t_in, rec.request.total_tokens);
  const Session& s = cluster_->session(sid);
  rec.status = RequestStatus::kRunning;
  rec.first_token = loop_->now();
  rec.session = sid;
  rec.server = s.server;
  loop_->Cancel(rec.timeout);
  waiting_.erase({rec.request.arrival, id});
  routes_[sid] = s.server;
  session_requests_[sid] = id;
  loop_->Note("Route", {{"request", id}, {"session", sid}, {"server", s.server},
                        {"instance", instance}});
  return sid;
}

bool Router::OfferIdleInstance(InstanceId instance) {
  const Instance& inst = cluster_->instance(instance);
  for (const auto& [arrival, id] : waiting_) {
    if (records_.at(id).request.model == inst.model) {
      Bind(id, instance);
      return true;
    }
  }
  return false;
}

RequestId Router::RequestOf(SessionId session) const {
  auto it = session_requests_.find(session);
  if (it == session_requests_.end()) throw LookupError("unknown session " + std::to_string(session));
  return it->second;
}

void Router::OnMigrated(SessionId session, ServerId dest, SimTime pause) {
  RequestRecord& rec = mutable_record(RequestOf(session));
  routes_[session] = dest;
  rec.server = dest;
  rec.pause += pause;
  ++rec.migrations;
  loop_->Note("RouteUpdate", {{"session", session}, {"server", dest}, {"migrated", true}});
}

void Router::OnPreempted(SessionId session, SimTime pause) {
  RequestRecord& rec = mutable_record(RequestOf(session));
  rec.pause += pause;
  ++rec.preemptions;
}

void Router::AddPause(SessionId session, SimTime pause) {
  mutable_record(RequestOf(session)).pause += pause;
}

void Router::OnSessionResumedElsewhere(SessionId session, ServerId server) {
  RequestRecord& rec = mutable_record(RequestOf(session));
  routes_[session] = server;
  rec.server = server;
  loop_->Note("RouteUpdate", {{"session", session}, {"server", server}, {"migrated", false}});
}

void Router::OnSessionComplete(const Session& session) {
  RequestRecord& rec = mutable_record(RequestOf(session.id));
  rec.status = RequestStatus::kCompleted;
  rec.completion = session.completed_at;
  routes_.erase(session.id);
}

void Router::OnSessionFailed(SessionId session) {
  RequestRecord& rec = mutable_record(RequestOf(session));
  rec.status = RequestStatus::kFailed;
  rec.completion = loop_->now();
  routes_.erase(session);
}

void Router::TimeOut(RequestId id) {
  RequestRecord& rec = mutable_record(id);
  if (rec.status != RequestStatus::kWaiting) return;
  rec.status = RequestStatus::kTimedOut;
  waiting_.erase({rec.request.arrival, id});
  if (hooks_.on_timeout) hooks_.on_timeout(id);
}

SimTime Router::ReportStatus(SessionId session) const {
  const Session& s = cluster_->session(session);
  SimTime end = s.completed_at >= SimTime(0) ? s.completed_at : loop_->now();
  // Time spent stopped for a handoff or a preemption produced no tokens.
  return std::max(SimTime(0), end - s.generation_start - s.pause);
}

bool Router::IsWaiting(RequestId id) const {
  auto it = records_.find(id);
  return it != records_.end() && it->second.status == RequestStatus::kWaiting;
}

std::vector<RequestId> Router::Waiting() const {
  std::vector<RequestId> out;
  for (const auto& [arrival, id] : waiting_) out.push_back(id);
  return out;
}

ServerId Router::RouteOf(SessionId session) const {
  auto it = routes_.find(session);
  return it == routes_.end() ? kNoServer : it->second;
}

std::vector<std::string> Router::Audit() const {
  std::vector<std::string> v;
  for (const auto& [sid, server] : routes_) {
    if (!cluster_->has_session(sid)) {
      v.push_back("route for unknown session " + std::to_string(sid));
      continue;
    }
    const Session& s = cluster_->session(sid);
    if (s.status != SessionStatus::kRunning && s.status != SessionStatus::kMigrating) {
      v.push_back("dangling route for finished session " + std::to_string(sid));
    } else if (s.server != server) {
      v.push_back("session " + std::to_string(sid) + " routed to " + std::to_string(server) +
                  " but runs on " + std::to_string(s.server));
    } else if (!cluster_->server(server).up) {
      v.push_back("session " + std::to_string(sid) + " routed to a down server");
    }
  }
  for (const auto& [sid, s] : cluster_->sessions()) {
    bool live = s.status == SessionStatus::kRunning || s.status == SessionStatus::kMigrating;
    if (live && routes_.count(sid) == 0) v.push_back("live session " + std::to_string(sid) + " has no route");
  }
  for (const auto& [id, rec] : records_) {
    if (rec.pause < SimTime(0)) v.push_back("negative pause for request " + std::to_string(id));
  }
  return v;
}

std::string Router::RecordsCsv() const {
  auto ms = [](SimTime t) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.3f", static_cast<double>(t.count()) / 1e6);
    return std::string(buf);
  };
  std::string out = "request_id,model,arrival_ms,startup_ms,pause_ms,status\n";
  for (const auto& [id, rec] : records_) {
    SimTime startup = rec.startup(timeout_);
    out += std::to_string(id) + "," + rec.request.model + "," + ms(rec.request.arrival) + "," +
           (startup < SimTime(0) ? std::string() : ms(startup)) + "," + ms(rec.pause) + "," +
           RequestStatusName(rec.status) + "\n";
  }
  return out;
}

}  // namespace llmctl::sim
