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

#include "llmctl/sim/cluster.h"

#include <algorithm>
#include <numeric>

#include "llmctl/common/error.h"

namespace llmctl::sim {

const char* PathName(Path path) {
  switch (path) {
    case Path::kNetToSsd:
      return "net_to_ssd";
    case Path::kSsdToDram:
      return "ssd_to_dram";
    case Path::kDramToGpu:
      return "dram_to_gpu";
  }
  return "?";
}

Path ParsePath(const std::string& name) {
  for (Path p : {Path::kNetToSsd, Path::kSsdToDram, Path::kDramToGpu}) {
    if (name == PathName(p)) return p;
  }
  throw ConfigError("unknown bandwidth path '" + name + "'");
}

const char* LoadSourceName(LoadSource source) {
  switch (source) {
    case LoadSource::kDram:
      return "dram";
    case LoadSource::kSsd:
      return "ssd";
    case LoadSource::kNet:
      return "net";
  }
  return "?";
}

std::vector<Path> PathsFrom(LoadSource source) {
  switch (source) {
    case LoadSource::kDram:
      return {Path::kDramToGpu};
    case LoadSource::kSsd:
      return {Path::kSsdToDram, Path::kDramToGpu};
    case LoadSource::kNet:
      return {Path::kNetToSsd, Path::kSsdToDram, Path::kDramToGpu};
  }
  return {};
}

double Bandwidths::Get(Path path) const {
  switch (path) {
    case Path::kNetToSsd:
      return net_to_ssd;
    case Path::kSsdToDram:
      return ssd_to_dram;
    case Path::kDramToGpu:
      return dram_to_gpu;
  }
  return 0;
}

void Bandwidths::Set(Path path, double bytes_per_s) {
  switch (path) {
    case Path::kNetToSsd:
      net_to_ssd = bytes_per_s;
      break;
    case Path::kSsdToDram:
      ssd_to_dram = bytes_per_s;
      break;
    case Path::kDramToGpu:
      dram_to_gpu = bytes_per_s;
      break;
  }
}

Path Bandwidths::Bottleneck(LoadSource source) const {
  std::vector<Path> paths = PathsFrom(source);
  Path best = paths.front();
  for (Path p : paths) {
    if (Get(p) < Get(best)) best = p;
  }
  return best;
}

Bandwidths Bandwidths::Scaled(double factor) const {
  return {net_to_ssd * factor, ssd_to_dram * factor, dram_to_gpu * factor};
}

void ModelProfile::Validate() const {
  if (id.empty()) throw ConfigError("model id must not be empty");
  if (gpus < 1) throw ConfigError(id + ": gpus must be >= 1");
  if (!(per_token_s > 0)) throw ConfigError(id + ": per_token_s must be > 0");
  if (!(resume_a > 0)) throw ConfigError(id + ": resume_a must be > 0");
  if (!(resume_b >= 0)) throw ConfigError(id + ": resume_b must be >= 0");
  if (!(resume_a < per_token_s)) {
    throw ConfigError(id + ": resume_a must be smaller than per_token_s");
  }
}

const char* InstanceStateName(InstanceState state) {
  switch (state) {
    case InstanceState::kLoading:
      return "LOADING";
    case InstanceState::kIdle:
      return "IDLE";
    case InstanceState::kBusy:
      return "BUSY";
  }
  return "?";
}

const char* SessionStatusName(SessionStatus status) {
  switch (status) {
    case SessionStatus::kRunning:
      return "RUNNING";
    case SessionStatus::kMigrating:
      return "MIGRATING";
    case SessionStatus::kCompleted:
      return "COMPLETED";
    case SessionStatus::kTimedOut:
      return "TIMED_OUT";
    case SessionStatus::kFailed:
      return "FAILED";
  }
  return "?";
}

uint64_t TokenCounter::Advance(SimTime dt) {
  if (dt < SimTime(0)) throw SchedulingError("negative advance");
  SimTime elapsed = carry + dt;
  uint64_t produced = static_cast<uint64_t>(elapsed / token_time);
  carry = elapsed % token_time;
  uint64_t added = std::min(produced, total - tokens);
  tokens += added;
  return added;
}

uint64_t Cluster::ServerState::dram_used() const {
  uint64_t used = 0;
  for (const auto& [m, b] : dram) used += b;
  return used;
}

uint64_t Cluster::ServerState::ssd_used() const {
  uint64_t used = 0;
  for (const auto& [m, b] : ssd) used += b;
  return used;
}

Cluster::Cluster(EventLoop* loop, std::vector<ServerConfig> servers,
                 std::vector<ModelProfile> models)
    : loop_(loop) {
  for (ModelProfile& m : models) {
    m.Validate();
    std::string id = m.id;
    if (!models_.emplace(id, std::move(m)).second) throw ConfigError("duplicate model " + id);
  }
  for (ServerConfig& c : servers) {
    if (c.gpu_slots < 0) throw ConfigError("gpu_slots must be >= 0");
    ServerId id = c.id;
    ServerState st;
    for (const std::string& m : c.ssd_models) {
      uint64_t size = model(m).size_bytes;
      if (st.ssd_used() + size > c.ssd_capacity) {
        throw ConfigError("server " + std::to_string(id) + ": SSD capacity exceeded by " + m);
      }
      st.ssd[m] = size;
    }
    for (const std::string& m : c.dram_models) {
      uint64_t size = model(m).size_bytes;
      if (st.dram_used() + size > c.dram_capacity) {
        throw ConfigError("server " + std::to_string(id) + ": DRAM capacity exceeded by " + m);
      }
      st.dram[m] = size;
      st.dram_lru.push_back(m);
    }
    st.config = std::move(c);
    if (!servers_.emplace(id, std::move(st)).second) {
      throw ConfigError("duplicate server id " + std::to_string(id));
    }
  }
}

const ModelProfile& Cluster::model(const std::string& id) const {
  auto it = models_.find(id);
  if (it == models_.end()) throw LookupError("unknown model '" + id + "'");
  return it->second;
}

const Cluster::ServerState& Cluster::server(ServerId id) const {
  auto it = servers_.find(id);
  if (it == servers_.end()) throw LookupError("unknown server " + std::to_string(id));
  return it->second;
}

Cluster::ServerState& Cluster::mutable_server(ServerId id) {
  return const_cast<ServerState&>(server(id));
}

std::vector<ServerId> Cluster::server_ids() const {
  std::vector<ServerId> ids;
  for (const auto& [id, s] : servers_) ids.push_back(id);
  return ids;
}

LoadSource Cluster::BestSource(ServerId server_id, const std::string& model_id) const {
  const ServerState& s = server(server_id);
  if (s.dram.count(model_id)) return LoadSource::kDram;
  if (s.ssd.count(model_id)) return LoadSource::kSsd;
  return LoadSource::kNet;
}

int Cluster::FreeSlots(ServerId server_id) const {
  const ServerState& s = server(server_id);
  return s.up ? s.config.gpu_slots - s.slots_used : 0;
}

int Cluster::ReclaimableSlots(ServerId server_id, const std::string& keep_model) const {
  int slots = 0;
  for (InstanceId id : server(server_id).instances) {
    const Instance& inst = instances_.at(id);
    if (inst.state == InstanceState::kIdle && !inst.reserved && inst.model != keep_model) {
      slots += inst.slots;
    }
  }
  return slots;
}

const Instance& Cluster::instance(InstanceId id) const {
  auto it = instances_.find(id);
  if (it == instances_.end()) throw LookupError("unknown instance " + std::to_string(id));
  return it->second;
}

Instance& Cluster::mutable_instance(InstanceId id) {
  return const_cast<Instance&>(instance(id));
}

std::vector<const Instance*> Cluster::InstancesOn(ServerId server_id) const {
  std::vector<const Instance*> out;
  for (InstanceId id : server(server_id).instances) out.push_back(&instances_.at(id));
  return out;
}

const Instance* Cluster::FindIdleInstance(const std::string& model_id, ServerId server_id) const {
  const Instance* best = nullptr;
  for (const auto& [id, inst] : instances_) {
    if (inst.model != model_id || inst.state != InstanceState::kIdle || inst.reserved) continue;
    if (server_id != kNoServer && inst.server != server_id) continue;
    if (best == nullptr || inst.idle_since < best->idle_since) best = &inst;
  }
  return best;
}

const Instance* Cluster::FindInstanceByDecision(DecisionId decision, ServerId server_id,
                                                const std::string& model_id) const {
  auto it = servers_.find(server_id);
  if (it == servers_.end()) return nullptr;
  for (InstanceId id : it->second.instances) {
    const Instance& inst = instances_.at(id);
    if (inst.decision == decision && inst.model == model_id) return &inst;
  }
  return nullptr;
}

bool Cluster::ReclaimSlots(ServerId server_id, int slots, const std::string& keep_model) {
  if (FreeSlots(server_id) >= slots) return true;
  if (!server(server_id).up) return false;
  if (FreeSlots(server_id) + ReclaimableSlots(server_id, keep_model) < slots) return false;
  std::vector<const Instance*> idle;
  for (const Instance* inst : InstancesOn(server_id)) {
    if (inst->state == InstanceState::kIdle && !inst->reserved && inst->model != keep_model) {
      idle.push_back(inst);
    }
  }
  std::sort(idle.begin(), idle.end(), [](const Instance* a, const Instance* b) {
    return a->idle_since != b->idle_since ? a->idle_since < b->idle_since : a->id < b->id;
  });
  std::vector<InstanceId> victims;
  int free = FreeSlots(server_id);
  for (const Instance* inst : idle) {
    if (free >= slots) break;
    victims.push_back(inst->id);
    free += inst->slots;
  }
  for (InstanceId id : victims) {
    loop_->Note("Reclaim", {{"server", server_id}, {"instance", id}});
    RemoveInstance(id);
  }
  return true;
}

InstanceId Cluster::ReserveInstance(ServerId server_id, const std::string& model_id) {
  const ModelProfile& m = model(model_id);
  ServerState& s = mutable_server(server_id);
  if (!s.up) throw SchedulingError("server " + std::to_string(server_id) + " is down");
  if (FreeSlots(server_id) < m.gpus) {
    throw SchedulingError("server " + std::to_string(server_id) + " lacks free slots for " +
                          model_id);
  }
  Instance inst;
  inst.id = next_instance_++;
  inst.model = model_id;
  inst.server = server_id;
  inst.state = InstanceState::kLoading;
  inst.slots = m.gpus;
  s.slots_used += m.gpus;
  s.instances.push_back(inst.id);
  InstanceId id = inst.id;
  instances_.emplace(id, std::move(inst));
  return id;
}

InstanceId Cluster::AddWarmInstance(ServerId server_id, const std::string& model_id) {
  InstanceId id = ReserveInstance(server_id, model_id);
  Instance& inst = mutable_instance(id);
  const ServerState& s = server(server_id);
  inst.state = InstanceState::kIdle;
  inst.load_latency = TransferTime(model(model_id).size_bytes,
                                   s.config.bandwidths.Slowest(BestSource(server_id, model_id)));
  MarkIdle(id);
  return id;
}

uint64_t Cluster::StartLoad(InstanceId instance_id, DecisionId decision) {
  Instance& inst = mutable_instance(instance_id);
  if (inst.state != InstanceState::kLoading) {
    throw SchedulingError("instance " + std::to_string(instance_id) + " is not loading");
  }
  ServerState& s = mutable_server(inst.server);
  LoadTask task;
  task.id = next_task_++;
  task.server = inst.server;
  task.model = inst.model;
  task.source = BestSource(inst.server, inst.model);
  task.bytes = model(inst.model).size_bytes;
  task.instance = instance_id;
  task.decision = decision;
  task.enqueued_at = loop_->now();
  inst.decision = decision;
  s.load_queue.push_back(task);
  if (s.load_queue.size() == 1) StartNextLoad(inst.server);
  return task.id;
}

void Cluster::StartNextLoad(ServerId server_id) {
  ServerState& s = mutable_server(server_id);
  if (s.load_queue.empty() || !s.up) return;
  LoadTask& head = s.load_queue.front();
  head.started_at = loop_->now();
  SimTime duration = TransferTime(head.bytes, s.config.bandwidths.Slowest(head.source));
  head.done_event = loop_->ScheduleAfter(
      duration, EventKind::kLoadDone, [this, server_id] { FinishLoad(server_id); },
      {{"server", server_id},
       {"model", head.model},
       {"source", LoadSourceName(head.source)},
       {"decision", head.decision},
       {"task", head.id}});
}

void Cluster::FinishLoad(ServerId server_id) {
  ServerState& s = mutable_server(server_id);
  LoadTask task = s.load_queue.front();
  s.load_queue.pop_front();
  task.done_at = loop_->now();
  Instance& inst = mutable_instance(task.instance);
  inst.state = InstanceState::kIdle;
  inst.reserved = true;  // the load's owner decides what happens next
  inst.load_latency = task.done_at - task.started_at;
  inst.idle_since = task.done_at;
  if (task.source == LoadSource::kNet && !s.ssd.count(task.model) &&
      s.ssd_used() + task.bytes <= s.config.ssd_capacity) {
    s.ssd[task.model] = task.bytes;
  }
  if (task.source == LoadSource::kDram) {
    TouchDram(s, task.model);
  } else {
    AddToDram(s, task.model, task.bytes);
  }
  StartNextLoad(server_id);
  if (hooks_.on_load_done) hooks_.on_load_done(task);
}

void Cluster::TouchDram(ServerState& s, const std::string& model_id) {
  auto it = std::find(s.dram_lru.begin(), s.dram_lru.end(), model_id);
  if (it != s.dram_lru.end()) s.dram_lru.splice(s.dram_lru.end(), s.dram_lru, it);
}

void Cluster::AddToDram(ServerState& s, const std::string& model_id, uint64_t bytes) {
  if (s.dram.count(model_id)) {
    TouchDram(s, model_id);
    return;
  }
  if (bytes > s.config.dram_capacity) return;
  uint64_t used = s.dram_used();
  while (used + bytes > s.config.dram_capacity && !s.dram_lru.empty()) {
    const std::string victim = s.dram_lru.front();
    s.dram_lru.pop_front();
    used -= s.dram.at(victim);
    s.dram.erase(victim);
  }
  s.dram[model_id] = bytes;
  s.dram_lru.push_back(model_id);
}

SimTime Cluster::QueueDrainTime(ServerId server_id) const {
  const ServerState& s = server(server_id);
  SimTime t = loop_->now();
  bool first = true;
  for (const LoadTask& task : s.load_queue) {
    SimTime d = TransferTime(task.bytes, s.config.bandwidths.Slowest(task.source));
    t = first ? task.started_at + d : t + d;
    first = false;
  }
  return t;
}

const LoadTask* Cluster::FindLoadTask(uint64_t task_id) const {
  for (const auto& [id, s] : servers_) {
    for (const LoadTask& t : s.load_queue) {
      if (t.id == task_id) return &t;
    }
  }
  return nullptr;
}

std::vector<DecisionId> Cluster::QueuedDecisions(ServerId server_id) const {
  std::vector<DecisionId> out;
  for (const LoadTask& t : server(server_id).load_queue) out.push_back(t.decision);
  return out;
}

void Cluster::RemoveInstance(InstanceId id) {
  Instance& inst = mutable_instance(id);
  ServerState& s = mutable_server(inst.server);
  if (inst.state == InstanceState::kLoading) {
    for (auto it = s.load_queue.begin(); it != s.load_queue.end(); ++it) {
      if (it->instance != id) continue;
      bool head = it == s.load_queue.begin();
      if (head) loop_->Cancel(it->done_event);
      s.load_queue.erase(it);
      if (head) StartNextLoad(inst.server);
      break;
    }
  }
  loop_->Cancel(inst.keep_alive);
  s.slots_used -= inst.slots;
  s.instances.erase(std::find(s.instances.begin(), s.instances.end(), id));
  instances_.erase(id);
}

void Cluster::Unload(InstanceId id) {
  const Instance& inst = instance(id);
  if (inst.state == InstanceState::kBusy && has_session(inst.session) &&
      session(inst.session).instance == id) {
    throw SchedulingError("instance " + std::to_string(id) + " is serving a session");
  }
  RemoveInstance(id);
}

void Cluster::MarkIdle(InstanceId id) {
  Instance& inst = mutable_instance(id);
  inst.state = InstanceState::kIdle;
  inst.session = 0;
  inst.reserved = false;
  inst.idle_since = loop_->now();
  loop_->Cancel(inst.keep_alive);
  inst.keep_alive = loop_->ScheduleAfter(
      inst.load_latency, EventKind::kKeepAliveExpiry,
      [this, id] {
        if (!has_instance(id)) return;
        const Instance& i = instance(id);
        if (i.state != InstanceState::kIdle || i.reserved) return;
        ServerId server_id = i.server;
        RemoveInstance(id);
        if (hooks_.on_slots_released) hooks_.on_slots_released(server_id);
      },
      {{"server", inst.server}, {"instance", id}, {"model", inst.model}});
}

void Cluster::Claim(InstanceId id) {
  Instance& inst = mutable_instance(id);
  if (inst.state != InstanceState::kIdle) {
    throw SchedulingError("instance " + std::to_string(id) + " is not idle");
  }
  loop_->Cancel(inst.keep_alive);
  inst.keep_alive = {};
  inst.reserved = true;
}

SessionId Cluster::StartSession(InstanceId instance_id, RequestId request, uint64_t t_in,
                                uint64_t total_tokens) {
  Instance& inst = mutable_instance(instance_id);
  if (inst.state != InstanceState::kIdle) {
    throw SchedulingError("instance " + std::to_string(instance_id) + " is not idle");
  }
  loop_->Cancel(inst.keep_alive);
  inst.keep_alive = {};
  inst.state = InstanceState::kBusy;
  inst.reserved = false;
  Session s;
  s.id = next_session_++;
  s.request = request;
  s.model = inst.model;
  s.server = inst.server;
  s.instance = instance_id;
  s.t_in = t_in;
  s.total_tokens = total_tokens;
  s.segment_start = loop_->now();
  s.generation_start = loop_->now();
  inst.session = s.id;
  SessionId id = s.id;
  sessions_.emplace(id, std::move(s));
  ScheduleCompletion(sessions_.at(id));
  return id;
}

Session& Cluster::session(SessionId id) {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw LookupError("unknown session " + std::to_string(id));
  return it->second;
}

const Session& Cluster::session(SessionId id) const {
  return const_cast<Cluster*>(this)->session(id);
}

uint64_t Cluster::TokensAt(const Session& s, SimTime at) const {
  if (!s.generating || at <= s.segment_start) return s.base_tokens;
  uint64_t produced = static_cast<uint64_t>((at - s.segment_start) / model(s.model).token_time());
  return std::min(s.total_tokens, s.base_tokens + produced);
}

SimTime Cluster::NextTokenBoundary(const Session& s, SimTime at) const {
  if (at <= s.segment_start) return s.segment_start;
  SimTime t = model(s.model).token_time();
  int64_t k = ((at - s.segment_start) + t - SimTime(1)) / t;
  return s.segment_start + k * t;
}

void Cluster::ScheduleCompletion(Session& s) {
  loop_->Cancel(s.completion);
  SimTime at = s.segment_start +
               static_cast<int64_t>(s.total_tokens - s.base_tokens) * model(s.model).token_time();
  SessionId id = s.id;
  s.completion = loop_->Schedule(at, EventKind::kCompletion, [this, id] { CompleteSession(id); },
                                 {{"session", id}, {"server", s.server}, {"model", s.model}});
}

void Cluster::CompleteSession(SessionId id) {
  Session& s = session(id);
  s.base_tokens = s.total_tokens;
  s.generating = false;
  s.status = SessionStatus::kCompleted;
  s.completed_at = loop_->now();
  ServerId server_id = s.server;
  MarkIdle(s.instance);
  if (hooks_.on_session_complete) hooks_.on_session_complete(s);
  if (hooks_.on_slots_released) hooks_.on_slots_released(server_id);
}

uint64_t Cluster::StopGeneration(Session& s, SimTime at) {
  uint64_t tokens = TokensAt(s, at);
  s.base_tokens = tokens;
  s.segment_start = at;
  s.generating = false;
  loop_->Cancel(s.completion);
  s.completion = {};
  return tokens;
}

void Cluster::ResumeGeneration(Session& s, InstanceId instance_id, SimTime start,
                               uint64_t base_tokens) {
  Instance& inst = mutable_instance(instance_id);
  if (inst.state != InstanceState::kIdle) {
    throw SchedulingError("instance " + std::to_string(instance_id) + " is not idle");
  }
  loop_->Cancel(inst.keep_alive);
  inst.keep_alive = {};
  inst.state = InstanceState::kBusy;
  inst.reserved = false;
  inst.session = s.id;
  s.instance = instance_id;
  s.server = inst.server;
  s.base_tokens = base_tokens;
  s.segment_start = start;
  s.generating = true;
  ScheduleCompletion(s);
}

void Cluster::ContinueGeneration(Session& s, SimTime start) {
  const Instance& inst = instance(s.instance);
  if (inst.state != InstanceState::kBusy || inst.session != s.id) {
    throw SchedulingError("session " + std::to_string(s.id) + " does not hold its instance");
  }
  s.segment_start = start;
  s.generating = true;
  ScheduleCompletion(s);
}

void Cluster::AttachStopped(Session& s, InstanceId instance_id) {
  const Instance& inst = instance(instance_id);
  if (s.generating) throw SchedulingError("session " + std::to_string(s.id) + " is generating");
  if (inst.model != s.model || inst.state == InstanceState::kBusy) {
    throw SchedulingError("instance " + std::to_string(instance_id) + " cannot take session " +
                          std::to_string(s.id));
  }
  s.instance = instance_id;
  s.server = inst.server;
}

void Cluster::FailSession(Session& s, SessionStatus status) {
  loop_->Cancel(s.completion);
  s.completion = {};
  s.base_tokens = TokensAt(s, loop_->now());
  s.generating = false;
  s.status = status;
  s.completed_at = loop_->now();
}

std::vector<SessionId> Cluster::FailServer(ServerId server_id) {
  ServerState& s = mutable_server(server_id);
  std::vector<SessionId> lost;
  if (!s.up) return lost;
  s.up = false;
  if (!s.load_queue.empty()) loop_->Cancel(s.load_queue.front().done_event);
  s.load_queue.clear();
  std::vector<InstanceId> ids = s.instances;
  for (InstanceId id : ids) {
    Instance& inst = mutable_instance(id);
    if (inst.state == InstanceState::kBusy && has_session(inst.session)) {
      Session& sess = session(inst.session);
      FailSession(sess, SessionStatus::kFailed);
      lost.push_back(sess.id);
    }
    inst.state = InstanceState::kIdle;  // nothing left to cancel
    RemoveInstance(id);
  }
  s.dram.clear();
  s.dram_lru.clear();
  return lost;
}

std::vector<std::string> Cluster::Audit() const {
  std::vector<std::string> v;
  for (const auto& [sid, s] : servers_) {
    int used = 0;
    for (InstanceId id : s.instances) {
      auto it = instances_.find(id);
      if (it == instances_.end()) {
        v.push_back("server " + std::to_string(sid) + " lists missing instance " + std::to_string(id));
        continue;
      }
      used += it->second.slots;
      if (it->second.server != sid) v.push_back("instance " + std::to_string(id) + " on wrong server");
    }
    if (used != s.slots_used) v.push_back("server " + std::to_string(sid) + " slot count drift");
    if (s.slots_used > s.config.gpu_slots) v.push_back("server " + std::to_string(sid) + " oversubscribed");
    if (!s.up && (!s.instances.empty() || !s.load_queue.empty())) {
      v.push_back("down server " + std::to_string(sid) + " still holds work");
    }
    for (size_t i = 0; i < s.load_queue.size(); ++i) {
      const LoadTask& t = s.load_queue[i];
      if (i > 0 && t.started_at >= SimTime(0)) {
        v.push_back("server " + std::to_string(sid) + " has more than one load in flight");
      }
      auto it = instances_.find(t.instance);
      if (it == instances_.end() || it->second.state != InstanceState::kLoading) {
        v.push_back("load task " + std::to_string(t.id) + " has no loading instance");
      }
    }
    if (s.dram_used() > s.config.dram_capacity) v.push_back("server " + std::to_string(sid) + " DRAM over capacity");
    if (s.ssd_used() > s.config.ssd_capacity) v.push_back("server " + std::to_string(sid) + " SSD over capacity");
  }
  for (const auto& [id, inst] : instances_) {
    if (inst.state == InstanceState::kBusy) {
      auto it = sessions_.find(inst.session);
      if (it == sessions_.end() || it->second.instance != id ||
          (it->second.status != SessionStatus::kRunning &&
           it->second.status != SessionStatus::kMigrating)) {
        v.push_back("busy instance " + std::to_string(id) + " has no live session");
      }
    }
    if (inst.state == InstanceState::kLoading) {
      int tasks = 0;
      for (const LoadTask& t : server(inst.server).load_queue) tasks += t.instance == id;
      if (tasks != 1) v.push_back("loading instance " + std::to_string(id) + " has " + std::to_string(tasks) + " load tasks");
    }
  }
  for (const auto& [id, s] : sessions_) {
    if (s.status != SessionStatus::kRunning && s.status != SessionStatus::kMigrating) continue;
    auto it = instances_.find(s.instance);
    bool ok = it != instances_.end() && it->second.server == s.server;
    if (ok && s.generating) {
      ok = it->second.state == InstanceState::kBusy && it->second.session == id;
    } else if (ok) {
      // Stopped sessions hold their instance (handoff in flight) or a
      // reserved one (being reloaded elsewhere).
      const Instance& inst = it->second;
      ok = (inst.state == InstanceState::kBusy && inst.session == id) ||
           inst.state == InstanceState::kLoading ||
           (inst.state == InstanceState::kIdle && inst.reserved);
    }
    if (!ok) v.push_back("live session " + std::to_string(id) + " has no instance");
  }
  return v;
}

uint64_t Cluster::instructions_received(DecisionId decision) const {
  auto it = instructions_.find(decision);
  return it == instructions_.end() ? 0 : it->second;
}

}  // namespace llmctl::sim
