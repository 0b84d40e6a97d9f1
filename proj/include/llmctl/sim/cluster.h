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

#include <cstdint>
#include <deque>
#include <functional>
#include <list>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "llmctl/sim/event_loop.h"
#include "llmctl/sim/types.h"

namespace llmctl::sim {

enum class Path { kNetToSsd = 0, kSsdToDram = 1, kDramToGpu = 2 };
// Tier a GPU load starts from.
enum class LoadSource { kDram = 0, kSsd = 1, kNet = 2 };

const char* PathName(Path path);
const char* LoadSourceName(LoadSource source);
Path ParsePath(const std::string& name);
// Paths traversed by a load from `source` to GPU memory.
std::vector<Path> PathsFrom(LoadSource source);

struct Bandwidths {
  double net_to_ssd = 1.25e9;
  double ssd_to_dram = 12e9;
  double dram_to_gpu = 32e9;

  double Get(Path path) const;
  void Set(Path path, double bytes_per_s);
  // The bottleneck path of a pipelined load from `source`; lowest path index
  // wins ties.
  Path Bottleneck(LoadSource source) const;
  double Slowest(LoadSource source) const { return Get(Bottleneck(source)); }
  Bandwidths Scaled(double factor) const;
};

struct ModelProfile {
  std::string id;
  uint64_t size_bytes = 0;
  int gpus = 1;               // GPU slots an instance occupies
  double per_token_s = 0.05;  // t
  double resume_a = 0.005;    // recompute seconds per token
  double resume_b = 0.05;     // recompute intercept, seconds

  void Validate() const;
  SimTime token_time() const { return FromSeconds(per_token_s); }
};

struct ServerConfig {
  ServerId id = 0;
  int gpu_slots = 4;
  uint64_t dram_capacity = 512ull * 1000 * 1000 * 1000;
  uint64_t ssd_capacity = 4000ull * 1000 * 1000 * 1000;
  Bandwidths bandwidths;
  std::vector<std::string> dram_models;
  std::vector<std::string> ssd_models;
};

enum class InstanceState { kLoading, kIdle, kBusy };
const char* InstanceStateName(InstanceState state);

struct Instance {
  InstanceId id = 0;
  std::string model;
  ServerId server = kNoServer;
  InstanceState state = InstanceState::kLoading;
  int slots = 1;
  SimTime load_latency{0};
  SimTime idle_since{0};
  SessionId session = 0;
  // Idle but set aside for a pending session or migration.
  bool reserved = false;
  DecisionId decision = 0;  // decision whose load created the instance
  EventHandle keep_alive;
};

struct LoadTask {
  uint64_t id = 0;
  ServerId server = kNoServer;
  std::string model;
  LoadSource source = LoadSource::kNet;
  uint64_t bytes = 0;
  InstanceId instance = 0;
  DecisionId decision = 0;
  SimTime enqueued_at{0};
  SimTime started_at{-1};
  SimTime done_at{-1};
  EventHandle done_event;
};

enum class SessionStatus { kRunning, kMigrating, kCompleted, kTimedOut, kFailed };
const char* SessionStatusName(SessionStatus status);

// An inference session. Tokens accrue one per token time while the session
// is generating; segment_start/base_tokens anchor the current segment.
struct Session {
  SessionId id = 0;
  RequestId request = 0;
  std::string model;
  ServerId server = kNoServer;
  InstanceId instance = 0;
  uint64_t t_in = 0;
  uint64_t total_tokens = 0;
  uint64_t base_tokens = 0;
  SimTime segment_start{0};
  bool generating = true;
  SimTime generation_start{0};
  SimTime pause{0};
  SessionStatus status = SessionStatus::kRunning;
  SimTime completed_at{-1};
  EventHandle completion;
  int preemptions = 0;
  int migrations = 0;
};

// Discrete token counter with carried remainder, so that advancing by a sum
// of intervals equals advancing by each interval in turn.
struct TokenCounter {
  SimTime token_time{1};
  uint64_t total = 0;
  uint64_t tokens = 0;
  SimTime carry{0};

  // Returns the number of tokens added.
  uint64_t Advance(SimTime dt);
  bool done() const { return tokens >= total; }
};

// Simulated cluster state. Mutated only from event-loop callbacks.
class Cluster {
 public:
  struct Hooks {
    std::function<void(const LoadTask&)> on_load_done;
    std::function<void(Session&)> on_session_complete;
    std::function<void(ServerId)> on_slots_released;
  };

  struct ServerState {
    ServerConfig config;
    bool up = true;
    int slots_used = 0;
    // model -> bytes, with LRU order for DRAM.
    std::map<std::string, uint64_t> dram;
    std::list<std::string> dram_lru;
    std::map<std::string, uint64_t> ssd;
    std::deque<LoadTask> load_queue;  // front is in flight
    std::vector<InstanceId> instances;
    uint64_t dram_used() const;
    uint64_t ssd_used() const;
  };

  Cluster(EventLoop* loop, std::vector<ServerConfig> servers, std::vector<ModelProfile> models);

  void set_hooks(Hooks hooks) { hooks_ = std::move(hooks); }
  EventLoop& loop() { return *loop_; }

  // Models and servers.
  const ModelProfile& model(const std::string& id) const;
  bool has_model(const std::string& id) const { return models_.count(id) != 0; }
  const std::map<std::string, ModelProfile>& models() const { return models_; }
  const ServerState& server(ServerId id) const;
  std::vector<ServerId> server_ids() const;
  size_t num_servers() const { return servers_.size(); }

  LoadSource BestSource(ServerId server, const std::string& model) const;
  int FreeSlots(ServerId server) const;
  // Slots held by idle instances of models other than `keep_model`.
  int ReclaimableSlots(ServerId server, const std::string& keep_model = {}) const;

  // Instances.
  bool has_instance(InstanceId id) const { return instances_.count(id) != 0; }
  const Instance& instance(InstanceId id) const;
  std::vector<const Instance*> InstancesOn(ServerId server) const;
  // Oldest idle instance of `model` on `server`, or any server if kNoServer.
  const Instance* FindIdleInstance(const std::string& model, ServerId server = kNoServer) const;
  // Instance of `model` on `server` loaded for `decision`, if any.
  const Instance* FindInstanceByDecision(DecisionId decision, ServerId server,
                                         const std::string& model) const;

  // Unloads idle instances of other models (longest idle first) until
  // `slots` are free. False (and nothing unloaded) if impossible.
  bool ReclaimSlots(ServerId server, int slots, const std::string& keep_model = {});
  // Creates a LOADING instance holding the model's slots. Throws
  // SchedulingError if the slots are not free.
  InstanceId ReserveInstance(ServerId server, const std::string& model);
  // Creates an idle, already-loaded instance (initial cluster state). Its
  // keep-alive is the time a load from the best source would take.
  InstanceId AddWarmInstance(ServerId server, const std::string& model);
  // Queues the load for a reserved instance on the server's sequential
  // loading queue; returns the task id.
  uint64_t StartLoad(InstanceId instance, DecisionId decision);
  // Estimated-free instant of the server's loading queue under the true
  // bandwidths (queue replay).
  SimTime QueueDrainTime(ServerId server) const;
  const LoadTask* FindLoadTask(uint64_t task_id) const;
  // Decision ids that have a load task queued or in flight on `server`.
  std::vector<DecisionId> QueuedDecisions(ServerId server) const;
  // Removes the instance; cancels its load if still loading. Frees slots
  // without notifying on_slots_released (the caller is already acting on the
  // server).
  void Unload(InstanceId instance);
  // Re-arms the keep-alive timer of an idle instance.
  void MarkIdle(InstanceId instance);
  // Takes an idle instance out of keep-alive for a session or migration.
  void Claim(InstanceId instance);

  // Sessions.
  SessionId StartSession(InstanceId instance, RequestId request, uint64_t t_in,
                         uint64_t total_tokens);
  Session& session(SessionId id);
  const Session& session(SessionId id) const;
  bool has_session(SessionId id) const { return sessions_.count(id) != 0; }
  const std::map<SessionId, Session>& sessions() const { return sessions_; }
  uint64_t TokensAt(const Session& s, SimTime at) const;
  // Next token boundary of a generating session at or after `at`.
  SimTime NextTokenBoundary(const Session& s, SimTime at) const;
  // Stops generation at `at` (<= now is not required; `at` may be a future
  // token boundary already reached by the caller). Returns the token count.
  uint64_t StopGeneration(Session& s, SimTime at);
  // Continues a stopped session on `instance`, generating from `start` with
  // `base_tokens` already produced.
  void ResumeGeneration(Session& s, InstanceId instance, SimTime start, uint64_t base_tokens);
  // Restarts a stopped session on the busy instance it still holds.
  void ContinueGeneration(Session& s, SimTime start);
  // Moves a stopped session onto a loading or reserved idle instance; the
  // instance it held before is left for the caller to unload.
  void AttachStopped(Session& s, InstanceId instance);
  void FailSession(Session& s, SessionStatus status);

  // Takes a server down: cancels loads, drops instances, fails sessions.
  // Returns the ids of sessions that were running there.
  std::vector<SessionId> FailServer(ServerId server);

  // Invariant audit; empty when consistent.
  std::vector<std::string> Audit() const;

  // Servers count scheduler instructions per decision so a recovering
  // scheduler can tell which ones were delivered.
  void ReceiveInstruction(DecisionId decision) { ++instructions_[decision]; }
  uint64_t instructions_received(DecisionId decision) const;

 private:
  ServerState& mutable_server(ServerId id);
  Instance& mutable_instance(InstanceId id);
  void StartNextLoad(ServerId server);
  void FinishLoad(ServerId server);
  void AddToDram(ServerState& s, const std::string& model, uint64_t bytes);
  void TouchDram(ServerState& s, const std::string& model);
  void ScheduleCompletion(Session& s);
  void CompleteSession(SessionId id);
  void RemoveInstance(InstanceId id);

  EventLoop* loop_;
  Hooks hooks_;
  std::map<std::string, ModelProfile> models_;
  std::map<ServerId, ServerState> servers_;
  std::map<InstanceId, Instance> instances_;
  std::map<SessionId, Session> sessions_;
  std::map<DecisionId, uint64_t> instructions_;
  InstanceId next_instance_ = 1;
  SessionId next_session_ = 1;
  uint64_t next_task_ = 1;
};

}  // namespace llmctl::sim
