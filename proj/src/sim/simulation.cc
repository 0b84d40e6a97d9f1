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

#include "llmctl/sim/simulation.h"

#include <algorithm>

#include "llmctl/common/error.h"

namespace llmctl::sim {

Simulation::Simulation(SimulationConfig config) : config_(std::move(config)) {
  loop_.set_tracing(config_.trace);
  if (!config_.status_path.empty()) store_ = StatusStore(config_.status_path);
  crash_.point = config_.crash_point;
  crash_.nth = config_.crash_nth;
  if (crash_.nth < 1) throw ConfigError("crash_nth must be >= 1");

  cluster_ = std::make_unique<Cluster>(&loop_, config_.servers, config_.models);
  router_ = std::make_unique<Router>(&loop_, cluster_.get(), config_.timeout);
  migration_ = std::make_unique<MigrationEngine>(&loop_, cluster_.get(), router_.get(),
                                                 config_.migration);
  scheduler_ = std::make_unique<Scheduler>(&loop_, cluster_.get(), router_.get(), migration_.get(),
                                           &store_, config_.scheduler, &crash_);
  scheduler_->Initialize(config_.beliefs);

  Cluster::Hooks ch;
  ch.on_load_done = [this](const LoadTask& task) {
    bool mig = migration_->OnLoadDone(task);
    WithScheduler([&](Scheduler& s) { s.OnLoadDone(task, mig); });
  };
  ch.on_session_complete = [this](Session& s) {
    router_->OnSessionComplete(s);
    migration_->OnSessionComplete(s.id);
    if (cluster_->has_instance(s.instance)) {
      const Instance& inst = cluster_->instance(s.instance);
      if (inst.state == InstanceState::kIdle && !inst.reserved) {
        router_->OfferIdleInstance(inst.id);
      }
    }
  };
  ch.on_slots_released = [this](ServerId server) {
    WithScheduler([&](Scheduler& s) { s.OnSlotsReleased(server); });
  };
  cluster_->set_hooks(std::move(ch));

  Router::Hooks rh;
  rh.on_needs_load = [this](RequestId r) {
    WithScheduler([&](Scheduler& s) { s.OnRequest(r); });
  };
  rh.on_timeout = [this](RequestId r) {
    WithScheduler([&](Scheduler& s) { s.OnTimeout(r); });
  };
  router_->set_hooks(std::move(rh));

  MigrationEngine::Hooks mh;
  mh.on_finished = [this](const MigrationSession& ms) {
    if (ms.phase == MigrationPhase::kAborted && cluster_->has_instance(ms.dest_instance)) {
      const Instance& inst = cluster_->instance(ms.dest_instance);
      if (inst.state == InstanceState::kIdle && !inst.reserved) {
        router_->OfferIdleInstance(inst.id);
      }
    }
    WithScheduler([&](Scheduler& s) { s.OnMigrationFinished(ms); });
  };
  migration_->set_hooks(std::move(mh));

  for (const WarmInstance& w : config_.warm) cluster_->AddWarmInstance(w.server, w.model);
  for (const Request& r : config_.requests) {
    loop_.Schedule(r.arrival, EventKind::kRequestArrival, [this, r] { router_->Arrive(r); },
                   {{"request", r.id}, {"model", r.model}});
  }
  for (const FailureEvent& f : config_.failures) {
    ServerId server = f.server;
    cluster_->server(server);  // validates the id
    loop_.Schedule(f.at, EventKind::kFailure, [this, server] { Fail(server); },
                   {{"server", server}});
  }
}

template <class F>
void Simulation::WithScheduler(F&& f) {
  try {
    f(*scheduler_);
  } catch (const SchedulerCrash&) {
    Restart();
  }
}

void Simulation::Restart() {
  ++crashes_;
  scheduler_ = std::make_unique<Scheduler>(&loop_, cluster_.get(), router_.get(), migration_.get(),
                                           &store_, config_.scheduler, &crash_);
  scheduler_->Recover();
}

void Simulation::Fail(ServerId server) {
  std::vector<SessionId> lost = cluster_->FailServer(server);
  for (SessionId s : lost) router_->OnSessionFailed(s);
  migration_->OnServerFailed(server);
  WithScheduler([&](Scheduler& s) { s.OnServerFailed(server); });
}

size_t Simulation::Run() {
  if (!config_.audit_each_event) return loop_.RunUntilQuiescent();
  size_t fired = 0;
  while (loop_.RunUntilQuiescent(1) == 1) {
    ++fired;
    if (event_audit_.empty()) {
      std::vector<std::string> v = cluster_->Audit();
      for (std::string& x : router_->Audit()) v.push_back(std::move(x));
      for (std::string& x : v) {
        event_audit_.push_back("t=" + std::to_string(loop_.now().count()) + "ns: " + x);
      }
    }
  }
  return fired;
}

void Simulation::RunUntil(SimTime t) { loop_.RunUntil(t); }

std::vector<std::string> Simulation::Audit() const {
  std::vector<std::string> v = cluster_->Audit();
  for (std::string& x : router_->Audit()) v.push_back(std::move(x));
  for (std::string& x : scheduler_->Audit()) v.push_back(std::move(x));
  for (const std::string& x : event_audit_) v.push_back(x);
  if (loop_.pending() == 0) {
    for (const auto& [id, rec] : router_->records()) {
      if (rec.status == RequestStatus::kWaiting || rec.status == RequestStatus::kRunning) {
        v.push_back("request " + std::to_string(id) + " never finished");
      }
    }
    for (const auto& [id, ms] : migration_->all()) {
      if (!ms.terminal()) v.push_back("migration " + std::to_string(id) + " never finished");
    }
  }
  return v;
}

nlohmann::ordered_json Simulation::Residency() const {
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (ServerId id : cluster_->server_ids()) {
    const Cluster::ServerState& s = cluster_->server(id);
    std::vector<std::string> gpu;
    for (const Instance* inst : cluster_->InstancesOn(id)) gpu.push_back(inst->model);
    std::sort(gpu.begin(), gpu.end());
    std::vector<std::string> dram, ssd;
    for (const auto& [m, b] : s.dram) dram.push_back(m);
    for (const auto& [m, b] : s.ssd) ssd.push_back(m);
    out[std::to_string(id)] = {{"up", s.up}, {"gpu", gpu}, {"dram", dram}, {"ssd", ssd}};
  }
  return out;
}

nlohmann::ordered_json Simulation::Counters() const {
  std::map<std::string, int> status;
  for (const auto& [id, rec] : router_->records()) ++status[RequestStatusName(rec.status)];
  std::map<std::string, int> migrations;
  for (const auto& [id, ms] : migration_->all()) {
    ++migrations[ms.phase == MigrationPhase::kDone ? std::string("done")
                                                   : std::string("aborted_") +
                                                         AbortReasonName(ms.reason)];
  }
  std::map<std::string, int> actions;
  int preempted = 0;
  for (const auto& [id, d] : scheduler_->decisions()) {
    ++actions[ActionName(d.plan.action)];
    if (d.plan.action == Action::kPreemptThenLoad) preempted += static_cast<int>(d.plan.victims.size());
  }
  nlohmann::ordered_json out;
  out["requests"] = router_->records().size();
  out["status"] = status;
  out["decisions"] = actions;
  out["migrations"] = migrations;
  out["preempted_sessions"] = preempted;
  out["scheduler_crashes"] = crashes_;
  out["status_store_writes"] = store_.writes();
  return out;
}

}  // namespace llmctl::sim
