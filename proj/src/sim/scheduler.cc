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

#include "llmctl/sim/scheduler.h"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <random>
#include <tuple>

#include "llmctl/common/error.h"

namespace llmctl::sim {

namespace {

constexpr SimTime kNever = SimTime::max();

uint64_t Mix(uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::string DecisionKey(DecisionId id) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "decision/%020llu", static_cast<unsigned long long>(id));
  return buf;
}

std::string BeliefKey(ServerId server) { return "beliefs/" + std::to_string(server); }

}  // namespace

const char* PolicyName(Policy policy) {
  switch (policy) {
    case Policy::kAvailability:
      return "availability";
    case Policy::kLocality:
      return "locality";
    case Policy::kPreemption:
      return "preemption";
    case Policy::kLiveMigration:
      return "live_migration";
  }
  return "?";
}

Policy ParsePolicy(const std::string& name) {
  if (name == "availability" || name == "av") return Policy::kAvailability;
  if (name == "locality" || name == "loc") return Policy::kLocality;
  if (name == "preemption" || name == "pre") return Policy::kPreemption;
  if (name == "live_migration" || name == "lm" || name == "migration") return Policy::kLiveMigration;
  throw ConfigError("unknown policy '" + name + "'");
}

const char* ActionName(Action action) {
  switch (action) {
    case Action::kLoadDram:
      return "LOAD_DRAM";
    case Action::kLoadSsd:
      return "LOAD_SSD";
    case Action::kLoadNet:
      return "LOAD_NET";
    case Action::kMigrateThenLoad:
      return "MIGRATE_THEN_LOAD";
    case Action::kPreemptThenLoad:
      return "PREEMPT_THEN_LOAD";
    case Action::kPend:
      return "PEND";
  }
  return "?";
}

Action ParseAction(const std::string& name) {
  for (Action a : {Action::kLoadDram, Action::kLoadSsd, Action::kLoadNet, Action::kMigrateThenLoad,
                   Action::kPreemptThenLoad, Action::kPend}) {
    if (name == ActionName(a)) return a;
  }
  throw FormatError("unknown action '" + name + "'");
}

Action LoadAction(LoadSource source) {
  switch (source) {
    case LoadSource::kDram:
      return Action::kLoadDram;
    case LoadSource::kSsd:
      return Action::kLoadSsd;
    case LoadSource::kNet:
      return Action::kLoadNet;
  }
  return Action::kLoadNet;
}

const char* PreemptRecoveryName(PreemptRecovery mode) {
  return mode == PreemptRecovery::kRegenerate ? "regenerate" : "resume";
}

PreemptRecovery ParsePreemptRecovery(const std::string& name) {
  if (name == "regenerate") return PreemptRecovery::kRegenerate;
  if (name == "resume") return PreemptRecovery::kResume;
  throw ConfigError("unknown preempt recovery '" + name + "'");
}

const char* CrashPointName(CrashPoint point) {
  switch (point) {
    case CrashPoint::kNone:
      return "none";
    case CrashPoint::kBeforePersist:
      return "before_persist";
    case CrashPoint::kAfterPersist:
      return "after_persist";
    case CrashPoint::kAfterInstruct:
      return "after_instruct";
    case CrashPoint::kBeforeCompletionPersist:
      return "before_completion_persist";
  }
  return "?";
}

CrashPoint ParseCrashPoint(const std::string& name) {
  for (CrashPoint p : {CrashPoint::kNone, CrashPoint::kBeforePersist, CrashPoint::kAfterPersist,
                       CrashPoint::kAfterInstruct, CrashPoint::kBeforeCompletionPersist}) {
    if (name == CrashPointName(p)) return p;
  }
  throw ConfigError("unknown crash point '" + name + "'");
}

const char* DecisionStateName(DecisionState state) {
  switch (state) {
    case DecisionState::kPersisted:
      return "persisted";
    case DecisionState::kInstructed:
      return "instructed";
    case DecisionState::kLoadDone:
      return "load_done";
    case DecisionState::kDone:
      return "done";
    case DecisionState::kVoid:
      return "void";
  }
  return "?";
}

namespace {

DecisionState ParseDecisionState(const std::string& name) {
  for (DecisionState s : {DecisionState::kPersisted, DecisionState::kInstructed,
                          DecisionState::kLoadDone, DecisionState::kDone, DecisionState::kVoid}) {
    if (name == DecisionStateName(s)) return s;
  }
  throw FormatError("unknown decision state '" + name + "'");
}

LoadSource ParseLoadSource(const std::string& name) {
  for (LoadSource s : {LoadSource::kDram, LoadSource::kSsd, LoadSource::kNet}) {
    if (name == LoadSourceName(s)) return s;
  }
  throw FormatError("unknown load source '" + name + "'");
}

}  // namespace

nlohmann::ordered_json DecisionToJson(const Decision& d) {
  nlohmann::ordered_json j;
  j["id"] = d.id;
  j["request"] = d.request;
  j["model"] = d.model;
  j["state"] = DecisionStateName(d.state);
  j["created_ns"] = d.created_at.count();
  j["action"] = ActionName(d.plan.action);
  j["server"] = d.plan.server;
  j["source"] = LoadSourceName(d.plan.source);
  j["estimate_ns"] = d.plan.estimate.count();
  j["load_ns"] = d.plan.load.count();
  j["victims_ready_ns"] = d.plan.victims_ready.count();
  nlohmann::ordered_json victims = nlohmann::ordered_json::array();
  for (const VictimPlan& v : d.plan.victims) {
    victims.push_back({{"session", v.session},
                       {"model", v.model},
                       {"dest", v.dest},
                       {"dest_idle", v.dest_idle},
                       {"load_ns", v.load.count()},
                       {"resume_ns", v.resume.count()},
                       {"ready_ns", v.ready.count()}});
  }
  j["victims"] = victims;
  j["instance"] = d.instance;
  j["migrations"] = d.migrations;
  return j;
}

Decision DecisionFromJson(const nlohmann::json& j) {
  Decision d;
  d.id = j.at("id").get<DecisionId>();
  d.request = j.at("request").get<RequestId>();
  d.model = j.at("model").get<std::string>();
  d.state = ParseDecisionState(j.at("state").get<std::string>());
  d.created_at = SimTime(j.at("created_ns").get<int64_t>());
  d.plan.action = ParseAction(j.at("action").get<std::string>());
  d.plan.server = j.at("server").get<ServerId>();
  d.plan.source = ParseLoadSource(j.at("source").get<std::string>());
  d.plan.estimate = SimTime(j.at("estimate_ns").get<int64_t>());
  d.plan.load = SimTime(j.at("load_ns").get<int64_t>());
  d.plan.victims_ready = SimTime(j.at("victims_ready_ns").get<int64_t>());
  for (const auto& v : j.at("victims")) {
    VictimPlan vp;
    vp.session = v.at("session").get<SessionId>();
    vp.model = v.at("model").get<std::string>();
    vp.dest = v.at("dest").get<ServerId>();
    vp.dest_idle = v.at("dest_idle").get<bool>();
    vp.load = SimTime(v.at("load_ns").get<int64_t>());
    vp.resume = SimTime(v.at("resume_ns").get<int64_t>());
    vp.ready = SimTime(v.at("ready_ns").get<int64_t>());
    d.plan.victims.push_back(std::move(vp));
  }
  d.instance = j.at("instance").get<InstanceId>();
  d.migrations = j.at("migrations").get<std::vector<MigrationId>>();
  return d;
}

Scheduler::Scheduler(EventLoop* loop, Cluster* cluster, Router* router,
                     MigrationEngine* migration, StatusStore* store, SchedulerOptions options,
                     CrashPlan* crash)
    : loop_(loop),
      cluster_(cluster),
      router_(router),
      migration_(migration),
      store_(store),
      options_(options),
      crash_(crash),
      beliefs_(options.ema_alpha) {
  if (options_.max_victims < 1 || options_.max_victims > 12) {
    throw ConfigError("max_victims must be in [1, 12]");
  }
}

void Scheduler::Initialize(const std::map<ServerId, Bandwidths>& beliefs) {
  for (ServerId id : cluster_->server_ids()) {
    auto it = beliefs.find(id);
    beliefs_.Set(id, it != beliefs.end() ? it->second : cluster_->server(id).config.bandwidths);
    PersistBeliefs(id);
  }
}

void Scheduler::MaybeCrash(CrashPoint point) {
  if (crash_ == nullptr || crash_->fired || crash_->point != point) return;
  if (++crash_->seen < crash_->nth) return;
  crash_->fired = true;
  loop_->Note("SchedulerCrash", {{"point", CrashPointName(point)}});
  throw SchedulerCrash(point);
}

void Scheduler::Persist(const Decision& d) {
  store_->Put(DecisionKey(d.id), DecisionToJson(d));
  Track(d);
}

void Scheduler::Track(const Decision& d) {
  if (d.live() && d.plan.action == Action::kMigrateThenLoad && d.instance == 0) {
    awaiting_.insert(d.id);
  } else {
    awaiting_.erase(d.id);
  }
}

void Scheduler::PersistBeliefs(ServerId server) {
  const Bandwidths& b = beliefs_.Get(server);
  store_->Put(BeliefKey(server), {{"net_to_ssd", b.net_to_ssd},
                                  {"ssd_to_dram", b.ssd_to_dram},
                                  {"dram_to_gpu", b.dram_to_gpu}});
}

// ---- estimates ------------------------------------------------------------

SimTime Scheduler::QueueDelay(ServerId server) const {
  const Cluster::ServerState& st = cluster_->server(server);
  const Bandwidths& b = beliefs_.Get(server);
  const SimTime now = loop_->now();
  SimTime t{0};
  for (const LoadTask& task : st.load_queue) {
    SimTime est = TransferTime(task.bytes, b.Slowest(task.source));
    if (task.started_at >= SimTime(0)) {
      t += std::max(SimTime(0), task.started_at + est - now);
    } else {
      t += est;
    }
  }
  // Loads promised to decisions still waiting for victims to move out.
  for (DecisionId id : awaiting_) {
    const Decision& d = decisions_.at(id);
    if (d.plan.server == server) {
      const ModelProfile& m = cluster_->model(d.model);
      t += TransferTime(m.size_bytes, b.Slowest(cluster_->BestSource(server, d.model)));
    }
  }
  return t;
}

LoadEstimate Scheduler::EstimateLoad(const std::string& model, ServerId server) const {
  return sim::EstimateLoad(cluster_->model(model), server, cluster_->BestSource(server, model),
                           beliefs_.Get(server), QueueDelay(server));
}

MigrationEstimate Scheduler::EstimateMigration(SessionId session) const {
  const Session& s = cluster_->session(session);
  return sim::EstimateMigration(cluster_->model(s.model), session, s.t_in,
                                router_->ReportStatus(session));
}

int Scheduler::Promised(ServerId server) const {
  int slots = 0;
  for (DecisionId id : awaiting_) {
    const Decision& d = decisions_.at(id);
    if (d.plan.server == server) {
      slots += cluster_->model(d.model).gpus;
    }
  }
  return slots;
}

int Scheduler::Available(ServerId server, const std::string& model) const {
  if (!cluster_->server(server).up) return -1;
  return cluster_->FreeSlots(server) + cluster_->ReclaimableSlots(server, model) - Promised(server);
}

bool Scheduler::BetterThan(const Plan& a, const Plan& b) const {
  auto key = [](const Plan& p) {
    return std::make_tuple(p.estimate, p.action == Action::kMigrateThenLoad ? 1 : 0, p.server);
  };
  return key(a) < key(b);
}

ServerId Scheduler::LocalityServer(const std::string& model) const {
  const ModelProfile& m = cluster_->model(model);
  ServerId best = kNoServer;
  std::tuple<int, SimTime, ServerId> best_key;
  for (ServerId s : cluster_->server_ids()) {
    if (!cluster_->server(s).up) continue;
    LoadSource src = cluster_->BestSource(s, model);
    auto key = std::make_tuple(static_cast<int>(src),
                               TransferTime(m.size_bytes, beliefs_.Get(s).Slowest(src)), s);
    if (best == kNoServer || key < best_key) {
      best = s;
      best_key = key;
    }
  }
  return best;
}

bool Scheduler::PlanMigration(ServerId server, const std::string& model, int need,
                              Plan* plan) const {
  const SimTime now = loop_->now();
  std::vector<Victim> victims;
  for (const Instance* inst : cluster_->InstancesOn(server)) {
    if (inst->state != InstanceState::kBusy) continue;
    const Session& s = cluster_->session(inst->session);
    if (s.status != SessionStatus::kRunning || !s.generating || s.segment_start > now) continue;
    if (migration_->ActiveFor(s.id)) continue;
    victims.push_back({s.id, s.model, inst->slots, EstimateMigration(s.id).resume()});
  }
  std::sort(victims.begin(), victims.end(), [](const Victim& a, const Victim& b) {
    return a.resume != b.resume ? a.resume < b.resume : a.session < b.session;
  });
  if (static_cast<int>(victims.size()) > options_.max_victims) victims.resize(options_.max_victims);
  const int v = static_cast<int>(victims.size());
  int total = 0;
  for (const Victim& x : victims) total += x.slots;
  if (v == 0 || total < need) return false;
  const uint32_t full = (1u << v) - 1;
  std::vector<int> mask_slots(full + 1, 0);
  for (uint32_t mask = 1; mask <= full; ++mask) {
    int low = std::countr_zero(mask);
    mask_slots[mask] = mask_slots[mask & (mask - 1)] + victims[low].slots;
  }

  struct Dest {
    ServerId id;
    SimTime q;
    std::vector<SimTime> cost;  // per victim subset, kNever if infeasible
  };
  std::vector<Dest> dests;
  for (ServerId d : cluster_->server_ids()) {
    if (d == server || !cluster_->server(d).up) continue;
    int cap = cluster_->FreeSlots(d) + cluster_->ReclaimableSlots(d) - Promised(d);
    if (cap <= 0) continue;
    std::map<std::string, int> idle;
    for (const Instance* inst : cluster_->InstancesOn(d)) {
      if (inst->state == InstanceState::kIdle && !inst->reserved) ++idle[inst->model];
    }
    Dest dest{d, QueueDelay(d), std::vector<SimTime>(full + 1, kNever)};
    const Bandwidths& b = beliefs_.Get(d);
    for (uint32_t sub = 1; sub <= full; ++sub) {
      if (mask_slots[sub] > cap) continue;
      // Decreasing resume time minimises the latest ready instant.
      std::vector<int> order;
      for (int i = 0; i < v; ++i) {
        if (sub & (1u << i)) order.push_back(i);
      }
      std::sort(order.begin(), order.end(), [&](int x, int y) {
        return victims[x].resume != victims[y].resume ? victims[x].resume > victims[y].resume
                                                      : victims[x].session < victims[y].session;
      });
      std::map<std::string, int> free_idle = idle;
      SimTime loads{0}, worst{0};
      for (int i : order) {
        const Victim& x = victims[i];
        SimTime ready;
        if (free_idle[x.model] > 0) {
          --free_idle[x.model];
          ready = x.resume;
        } else {
          const ModelProfile& m = cluster_->model(x.model);
          loads += TransferTime(m.size_bytes, b.Slowest(cluster_->BestSource(d, x.model)));
          ready = dest.q + loads + x.resume;
        }
        worst = std::max(worst, ready);
      }
      dest.cost[sub] = worst;
    }
    dests.push_back(std::move(dest));
  }
  if (dests.empty()) return false;

  // dp[mask]: best achievable latest-ready time moving exactly `mask`.
  std::vector<SimTime> dp(full + 1, kNever);
  dp[0] = SimTime(0);
  std::vector<std::vector<uint32_t>> choice(dests.size(), std::vector<uint32_t>(full + 1, 0));
  for (size_t i = 0; i < dests.size(); ++i) {
    std::vector<SimTime> next = dp;
    for (uint32_t mask = 0; mask <= full; ++mask) {
      if (dp[mask] == kNever) continue;
      const uint32_t rest = full & ~mask;
      for (uint32_t sub = rest; sub != 0; sub = (sub - 1) & rest) {
        if (dests[i].cost[sub] == kNever) continue;
        SimTime c = std::max(dp[mask], dests[i].cost[sub]);
        if (c < next[mask | sub]) {
          next[mask | sub] = c;
          choice[i][mask | sub] = sub;
        }
      }
    }
    dp = std::move(next);
  }
  uint32_t goal = 0;
  for (uint32_t mask = 1; mask <= full; ++mask) {
    if (dp[mask] == kNever || mask_slots[mask] < need) continue;
    if (goal == 0 ||
        std::make_tuple(dp[mask], std::popcount(mask), mask) <
            std::make_tuple(dp[goal], std::popcount(goal), goal)) {
      goal = mask;
    }
  }
  if (goal == 0) return false;

  Plan p;
  p.action = Action::kMigrateThenLoad;
  p.server = server;
  p.source = cluster_->BestSource(server, model);
  p.load = TransferTime(cluster_->model(model).size_bytes, beliefs_.Get(server).Slowest(p.source));
  p.victims_ready = dp[goal];
  p.estimate = std::max(dp[goal], QueueDelay(server)) + p.load;
  uint32_t mask = goal;
  for (size_t i = dests.size(); i-- > 0;) {
    uint32_t sub = choice[i][mask];
    if (sub == 0) continue;
    mask ^= sub;
    // Replay the subset in load order to record per-victim figures.
    std::vector<int> order;
    for (int k = 0; k < v; ++k) {
      if (sub & (1u << k)) order.push_back(k);
    }
    std::sort(order.begin(), order.end(), [&](int x, int y) {
      return victims[x].resume != victims[y].resume ? victims[x].resume > victims[y].resume
                                                    : victims[x].session < victims[y].session;
    });
    std::map<std::string, int> idle;
    for (const Instance* inst : cluster_->InstancesOn(dests[i].id)) {
      if (inst->state == InstanceState::kIdle && !inst->reserved) ++idle[inst->model];
    }
    const Bandwidths& b = beliefs_.Get(dests[i].id);
    SimTime loads{0};
    std::vector<VictimPlan> group;
    for (int k : order) {
      const Victim& x = victims[k];
      VictimPlan vp;
      vp.session = x.session;
      vp.model = x.model;
      vp.dest = dests[i].id;
      vp.resume = x.resume;
      if (idle[x.model] > 0) {
        --idle[x.model];
        vp.dest_idle = true;
        vp.ready = x.resume;
      } else {
        const ModelProfile& m = cluster_->model(x.model);
        vp.load = TransferTime(m.size_bytes, b.Slowest(cluster_->BestSource(vp.dest, x.model)));
        loads += vp.load;
        vp.ready = dests[i].q + loads + x.resume;
      }
      group.push_back(std::move(vp));
    }
    p.victims.insert(p.victims.begin(), group.begin(), group.end());
  }
  *plan = std::move(p);
  return true;
}

Plan Scheduler::SelectServer(const std::string& model, RequestId request) const {
  const ModelProfile& m = cluster_->model(model);
  auto direct = [&](ServerId s) {
    LoadEstimate e = EstimateLoad(model, s);
    Plan p;
    p.action = LoadAction(e.source);
    p.server = s;
    p.source = e.source;
    p.estimate = e.value();
    p.load = e.transfer();
    return p;
  };
  Plan pend;
  switch (options_.policy) {
    case Policy::kAvailability: {
      std::vector<ServerId> candidates;
      for (ServerId s : cluster_->server_ids()) {
        if (Available(s, model) >= m.gpus) candidates.push_back(s);
      }
      if (candidates.empty()) return pend;
      std::mt19937_64 rng(Mix(options_.seed ^ Mix(request ^ Mix(loop_->now().count()))));
      std::uniform_int_distribution<size_t> pick(0, candidates.size() - 1);
      return direct(candidates[pick(rng)]);
    }
    case Policy::kLocality: {
      ServerId s = LocalityServer(model);
      if (s != kNoServer && Available(s, model) >= m.gpus) return direct(s);
      pend.server = s;
      return pend;
    }
    case Policy::kPreemption:
    case Policy::kLiveMigration:
      break;
  }
  bool found = false;
  Plan best;
  std::vector<ServerId> full;
  for (ServerId s : cluster_->server_ids()) {
    if (!cluster_->server(s).up) continue;
    int avail = Available(s, model);
    if (avail < m.gpus) {
      full.push_back(s);
      continue;
    }
    Plan p = direct(s);
    if (!found || BetterThan(p, best)) {
      best = std::move(p);
      found = true;
    }
  }
  for (ServerId s : full) {
    // Migration cannot beat its own lower bound: the load after an empty queue.
    SimTime load = TransferTime(m.size_bytes,
                                beliefs_.Get(s).Slowest(cluster_->BestSource(s, model)));
    if (found && QueueDelay(s) + load >= best.estimate) continue;
    Plan p;
    if (!PlanMigration(s, model, m.gpus - Available(s, model), &p)) continue;
    if (!found || BetterThan(p, best)) {
      best = std::move(p);
      found = true;
    }
  }
  if (!found) return pend;
  if (options_.policy == Policy::kPreemption && best.action == Action::kMigrateThenLoad) {
    best.action = Action::kPreemptThenLoad;
    best.estimate = QueueDelay(best.server) + best.load;
  }
  return best;
}

// ---- decisions -------------------------------------------------------------

void Scheduler::OnRequest(RequestId request) {
  if (!router_->IsWaiting(request)) return;
  const RequestRecord& rec = router_->record(request);
  Plan plan = SelectServer(rec.request.model, request);
  if (plan.action == Action::kPend) {
    pending_.insert({rec.request.arrival, request});
    ++stats_.pends;
    loop_->Note("Pend", {{"request", request}, {"model", rec.request.model}});
    return;
  }
  Commit(request, plan);
}

void Scheduler::Commit(RequestId request, const Plan& plan) {
  Decision d;
  d.id = next_decision_;
  d.request = request;
  d.model = router_->record(request).request.model;
  d.plan = plan;
  d.created_at = loop_->now();
  MaybeCrash(CrashPoint::kBeforePersist);
  Persist(d);
  ++next_decision_;
  ++stats_.decisions;
  if (plan.action == Action::kMigrateThenLoad) ++stats_.migrate_decisions;
  if (plan.action == Action::kPreemptThenLoad) ++stats_.preempt_decisions;
  const DecisionId id = d.id;
  decisions_.emplace(id, std::move(d));
  loop_->Note("Decision", {{"decision", id},
                           {"request", request},
                           {"action", ActionName(plan.action)},
                           {"server", plan.server},
                           {"estimate_ns", plan.estimate.count()},
                           {"victims", plan.victims.size()}});
  MaybeCrash(CrashPoint::kAfterPersist);
  Instruct(decisions_.at(id));
  MaybeCrash(CrashPoint::kAfterInstruct);
  Decision& ref = decisions_.at(id);
  ref.state = DecisionState::kInstructed;
  Persist(ref);
}

void Scheduler::Instruct(Decision& d) {
  cluster_->ReceiveInstruction(d.id);
  switch (d.plan.action) {
    case Action::kLoadDram:
    case Action::kLoadSsd:
    case Action::kLoadNet:
      StartRequestedLoad(d);
      break;
    case Action::kMigrateThenLoad:
      for (const VictimPlan& v : d.plan.victims) {
        d.migrations.push_back(migration_->Begin(v.session, v.dest, d.id));
      }
      break;
    case Action::kPreemptThenLoad:
      for (const VictimPlan& v : d.plan.victims) Preempt(d, v);
      StartRequestedLoad(d);
      break;
    case Action::kPend:
      throw SchedulingError("cannot instruct a pending decision");
  }
}

void Scheduler::StartRequestedLoad(Decision& d) {
  const ModelProfile& m = cluster_->model(d.model);
  if (!cluster_->ReclaimSlots(d.plan.server, m.gpus, d.model)) {
    throw SchedulingError("server " + std::to_string(d.plan.server) + " has no room for " +
                          d.model);
  }
  d.instance = cluster_->ReserveInstance(d.plan.server, d.model);
  cluster_->StartLoad(d.instance, d.id);
}

void Scheduler::Preempt(Decision& d, const VictimPlan& v) {
  Session& s = cluster_->session(v.session);
  if (s.status != SessionStatus::kRunning || !s.generating) return;
  const ModelProfile& m = cluster_->model(s.model);
  const SimTime now = loop_->now();
  cluster_->StopGeneration(s, now);
  const InstanceId old = s.instance;
  InstanceId inst;
  const Instance* idle = cluster_->FindIdleInstance(s.model, v.dest);
  if (idle != nullptr) {
    inst = idle->id;
    cluster_->Claim(inst);
  } else {
    if (!cluster_->ReclaimSlots(v.dest, m.gpus, s.model)) {
      throw SchedulingError("server " + std::to_string(v.dest) + " has no room for " + s.model);
    }
    inst = cluster_->ReserveInstance(v.dest, s.model);
    cluster_->StartLoad(inst, d.id);
  }
  cluster_->AttachStopped(s, inst);
  cluster_->Unload(old);
  router_->OnSessionResumedElsewhere(s.id, v.dest);
  loop_->Note("Preempt", {{"decision", d.id},
                          {"session", s.id},
                          {"tokens", s.base_tokens},
                          {"dest", v.dest},
                          {"dest_idle", idle != nullptr}});
  if (idle != nullptr) ResumePreempted(s, now);
}

void Scheduler::ResumePreempted(Session& s, SimTime ready) {
  const ModelProfile& m = cluster_->model(s.model);
  const uint64_t k = s.base_tokens;
  const SimTime killed = s.segment_start;
  SimTime recompute;
  if (options_.preempt_recovery == PreemptRecovery::kRegenerate) {
    recompute = FromSeconds(static_cast<long double>(m.resume_a) * s.t_in + m.resume_b) +
                static_cast<int64_t>(k) * m.token_time();
  } else {
    recompute = FromSeconds(static_cast<long double>(m.resume_a) * (s.t_in + k) + m.resume_b);
  }
  const SimTime start = ready + recompute;
  cluster_->ResumeGeneration(s, s.instance, start, k);
  const SimTime pause = start - killed;
  s.pause += pause;
  ++s.preemptions;
  router_->OnPreempted(s.id, pause);
}

void Scheduler::OnLoadDone(const LoadTask& task, bool migration_load) {
  if (cluster_->server(task.server).up && beliefs_.Has(task.server)) {
    beliefs_.OnLoadReport(task.server, task.source, task.bytes, task.done_at - task.started_at);
    PersistBeliefs(task.server);
  }
  if (migration_load) return;
  auto it = decisions_.find(task.decision);
  if (it != decisions_.end() && it->second.plan.action == Action::kPreemptThenLoad) {
    for (const VictimPlan& v : it->second.plan.victims) {
      if (!cluster_->has_session(v.session)) continue;
      Session& s = cluster_->session(v.session);
      if (s.status == SessionStatus::kRunning && !s.generating && s.instance == task.instance) {
        ResumePreempted(s, loop_->now());
        return;
      }
    }
  }
  if (it == decisions_.end() || !it->second.live() || it->second.instance != task.instance) {
    // Nobody is waiting for this instance any more; keep it warm. Its slots
    // are reclaimable, so pending requests may fit now.
    cluster_->MarkIdle(task.instance);
    router_->OfferIdleInstance(task.instance);
    RetryPending();
    return;
  }
  MaybeCrash(CrashPoint::kBeforeCompletionPersist);
  FinalizeLoad(it->second);
}

void Scheduler::FinalizeLoad(Decision& d) {
  d.state = DecisionState::kLoadDone;
  Persist(d);
  const bool bound = router_->IsWaiting(d.request);
  if (bound) {
    router_->Bind(d.request, d.instance);
  } else {
    cluster_->MarkIdle(d.instance);
    router_->OfferIdleInstance(d.instance);
  }
  d.state = DecisionState::kDone;
  Persist(d);
  if (!bound) RetryPending();
}

void Scheduler::OnMigrationFinished(const MigrationSession& ms) {
  auto it = decisions_.find(ms.decision);
  if (it != decisions_.end() && it->second.live() &&
      it->second.plan.action == Action::kMigrateThenLoad) {
    Decision& d = it->second;
    bool all_done = true;
    for (MigrationId id : d.migrations) all_done = all_done && migration_->get(id).terminal();
    if (!all_done) return;
    AfterMigrations(d);
  }
  RetryPending();
}

void Scheduler::AfterMigrations(Decision& d) {
  if (d.instance != 0) return;
  const ModelProfile& m = cluster_->model(d.model);
  const ServerId s = d.plan.server;
  const bool fits = cluster_->server(s).up &&
                    cluster_->FreeSlots(s) + cluster_->ReclaimableSlots(s, d.model) -
                            (Promised(s) - m.gpus) >=
                        m.gpus;
  if (router_->IsWaiting(d.request) && fits) {
    StartRequestedLoad(d);
    Persist(d);
    return;
  }
  Void(d);
  OnRequest(d.request);
}

void Scheduler::Void(Decision& d) {
  d.state = DecisionState::kVoid;
  Persist(d);
  ++stats_.voided;
  loop_->Note("DecisionVoid", {{"decision", d.id}, {"request", d.request}});
}

void Scheduler::OnSlotsReleased(ServerId) { RetryPending(); }

void Scheduler::OnTimeout(RequestId request) {
  for (auto it = pending_.begin(); it != pending_.end(); ++it) {
    if (it->second == request) {
      pending_.erase(it);
      return;
    }
  }
}

void Scheduler::OnServerFailed(ServerId) {
  std::vector<DecisionId> lost;
  for (auto& [id, d] : decisions_) {
    if (!d.live()) continue;
    if (d.plan.action == Action::kPreemptThenLoad) {
      for (const VictimPlan& v : d.plan.victims) {
        if (!cluster_->has_session(v.session)) continue;
        Session& s = cluster_->session(v.session);
        if (s.status == SessionStatus::kRunning && !cluster_->has_instance(s.instance)) {
          cluster_->FailSession(s, SessionStatus::kFailed);
          router_->OnSessionFailed(s.id);
        }
      }
    }
    if (d.instance != 0 && !cluster_->has_instance(d.instance)) lost.push_back(id);
  }
  for (DecisionId id : lost) {
    Decision& d = decisions_.at(id);
    Void(d);
    OnRequest(d.request);
  }
  RetryPending();
}

void Scheduler::RetryPending() {
  if (retrying_) return;
  retrying_ = true;
  std::set<std::string> stuck;
  for (auto it = pending_.begin(); it != pending_.end();) {
    const RequestId r = it->second;
    if (!router_->IsWaiting(r)) {
      it = pending_.erase(it);
      continue;
    }
    const std::string& model = router_->record(r).request.model;
    if (const Instance* idle = cluster_->FindIdleInstance(model)) {
      it = pending_.erase(it);
      router_->Bind(r, idle->id);
      continue;
    }
    // Capacity only shrinks within a pass, so one PEND covers the model.
    if (stuck.count(model)) {
      ++it;
      continue;
    }
    Plan plan = SelectServer(model, r);
    if (plan.action == Action::kPend) {
      stuck.insert(model);
      ++it;
      continue;
    }
    it = pending_.erase(it);
    Commit(r, plan);
  }
  retrying_ = false;
}

// ---- recovery --------------------------------------------------------------

void Scheduler::Sync(Decision& d) {
  if (d.plan.action == Action::kMigrateThenLoad && d.migrations.empty()) {
    for (const auto& [id, ms] : migration_->all()) {
      if (ms.decision == d.id) d.migrations.push_back(id);
    }
  }
  if (d.instance == 0) {
    if (const Instance* inst = cluster_->FindInstanceByDecision(d.id, d.plan.server, d.model)) {
      d.instance = inst->id;
    }
  }
}

void Scheduler::Recover() {
  beliefs_ = BandwidthBeliefs(options_.ema_alpha);
  for (const auto& [key, v] : store_->Scan("beliefs/")) {
    Bandwidths b;
    b.net_to_ssd = v.at("net_to_ssd").get<double>();
    b.ssd_to_dram = v.at("ssd_to_dram").get<double>();
    b.dram_to_gpu = v.at("dram_to_gpu").get<double>();
    beliefs_.Set(std::stoi(key.substr(8)), b);
  }
  for (ServerId id : cluster_->server_ids()) {
    if (!beliefs_.Has(id)) beliefs_.Set(id, cluster_->server(id).config.bandwidths);
  }
  decisions_.clear();
  awaiting_.clear();
  pending_.clear();
  stats_ = {};
  next_decision_ = 1;
  for (const auto& [key, v] : store_->Scan("decision/")) {
    Decision d = DecisionFromJson(v);
    next_decision_ = std::max(next_decision_, d.id + 1);
    ++stats_.decisions;
    if (d.plan.action == Action::kMigrateThenLoad) ++stats_.migrate_decisions;
    if (d.plan.action == Action::kPreemptThenLoad) ++stats_.preempt_decisions;
    if (d.state == DecisionState::kVoid) ++stats_.voided;
    Track(d);
    decisions_.emplace(d.id, std::move(d));
  }
  retrying_ = true;  // hold retries until reconciliation is complete
  std::vector<DecisionId> replan;
  for (auto& [id, d] : decisions_) {
    if (!d.live()) continue;
    if (d.state == DecisionState::kPersisted) {
      if (cluster_->instructions_received(id) == 0) {
        loop_->Note("Resend", {{"decision", id}});
        Instruct(d);
      } else {
        Sync(d);
      }
      d.state = DecisionState::kInstructed;
      Persist(d);
    } else {
      Sync(d);
      Track(d);
    }
    if (d.plan.action == Action::kMigrateThenLoad && d.instance == 0) {
      bool all_done = true;
      for (MigrationId m : d.migrations) all_done = all_done && migration_->get(m).terminal();
      if (all_done) replan.push_back(id);
      continue;
    }
    if (d.instance == 0 || !cluster_->has_instance(d.instance)) {
      replan.push_back(id);
      continue;
    }
    const Instance& inst = cluster_->instance(d.instance);
    if (inst.state == InstanceState::kIdle && inst.reserved && inst.session == 0) {
      // Loaded while no scheduler was around to record it.
      FinalizeLoad(d);
    }
  }
  for (const RequestId r : router_->Waiting()) {
    bool owned = false;
    for (const auto& [id, d] : decisions_) owned = owned || (d.live() && d.request == r);
    if (!owned) pending_.insert({router_->record(r).request.arrival, r});
  }
  retrying_ = false;
  for (DecisionId id : replan) {
    Decision& d = decisions_.at(id);
    if (!d.live()) continue;
    if (d.plan.action == Action::kMigrateThenLoad && d.instance == 0) {
      AfterMigrations(d);
    } else {
      Void(d);
      OnRequest(d.request);
    }
  }
  ++stats_.recoveries;
  RetryPending();
}

std::vector<std::string> Scheduler::Audit() const {
  std::vector<std::string> v;
  for (const auto& [id, d] : decisions_) {
    uint64_t n = cluster_->instructions_received(id);
    if (n != 1) {
      v.push_back("decision " + std::to_string(id) + " delivered " + std::to_string(n) + " times");
    }
  }
  return v;
}

}  // namespace llmctl::sim
