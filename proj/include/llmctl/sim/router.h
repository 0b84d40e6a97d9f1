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
#include <set>
#include <string>
#include <vector>

#include "llmctl/sim/cluster.h"
#include "llmctl/sim/event_loop.h"

namespace llmctl::sim {

struct Request {
  RequestId id = 0;
  std::string model;
  SimTime arrival{0};
  uint64_t t_in = 0;
  // Tokens the session will generate; known to the simulator only.
  uint64_t total_tokens = 0;
};

enum class RequestStatus { kWaiting, kRunning, kCompleted, kTimedOut, kFailed };
const char* RequestStatusName(RequestStatus status);

struct RequestRecord {
  Request request;
  RequestStatus status = RequestStatus::kWaiting;
  SimTime first_token{-1};
  SimTime completion{-1};
  SimTime pause{0};
  SessionId session = 0;
  ServerId server = kNoServer;
  int migrations = 0;
  int preemptions = 0;
  EventHandle timeout;

  // Arrival to first token; the timeout threshold for timed-out requests.
  SimTime startup(SimTime timeout_after) const;
};

// Cluster-global request router with per-instance concurrency one.
class Router {
 public:
  struct Hooks {
    // No idle instance was available; the scheduler must act.
    std::function<void(RequestId)> on_needs_load;
    std::function<void(RequestId)> on_timeout;
  };

  Router(EventLoop* loop, Cluster* cluster, SimTime timeout = std::chrono::seconds(300));
  void set_hooks(Hooks hooks) { hooks_ = std::move(hooks); }

  // Registers the request, arms its startup timeout and dispatches it.
  void Arrive(const Request& request);
  // Routes to an idle instance if one exists, otherwise asks the scheduler.
  void Dispatch(RequestId id);
  // Starts the request's session on an idle instance.
  SessionId Bind(RequestId id, InstanceId instance);
  // Serves the earliest waiting request of the instance's model, if any.
  // The instance must be idle. Returns whether it was used.
  bool OfferIdleInstance(InstanceId instance);

  // Session lifecycle reports.
  void OnMigrated(SessionId session, ServerId dest, SimTime pause);
  void OnPreempted(SessionId session, SimTime pause);
  void AddPause(SessionId session, SimTime pause);
  void OnSessionResumedElsewhere(SessionId session, ServerId server);
  void OnSessionComplete(const Session& session);
  void OnSessionFailed(SessionId session);

  // Running duration of a session net of pauses, frozen at the end.
  SimTime ReportStatus(SessionId session) const;

  bool IsWaiting(RequestId id) const;
  // Waiting requests in (arrival, id) order.
  std::vector<RequestId> Waiting() const;
  const RequestRecord& record(RequestId id) const;
  const std::map<RequestId, RequestRecord>& records() const { return records_; }
  // Server a session is routed to, or kNoServer.
  ServerId RouteOf(SessionId session) const;
  const std::map<SessionId, ServerId>& routes() const { return routes_; }
  SimTime timeout() const { return timeout_; }

  // Route table vs cluster consistency; empty when consistent.
  std::vector<std::string> Audit() const;

  // request_id,model,arrival_ms,startup_ms,pause_ms,status
  std::string RecordsCsv() const;

 private:
  RequestRecord& mutable_record(RequestId id);
  RequestId RequestOf(SessionId session) const;
  void TimeOut(RequestId id);

  EventLoop* loop_;
  Cluster* cluster_;
  SimTime timeout_;
  Hooks hooks_;
  std::map<RequestId, RequestRecord> records_;
  std::set<std::pair<SimTime, RequestId>> waiting_;
  std::map<SessionId, ServerId> routes_;
  std::map<SessionId, RequestId> session_requests_;
};

}  // namespace llmctl::sim
