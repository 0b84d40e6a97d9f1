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

#include <algorithm>
#include <functional>
#include <random>

#include "doctest.h"
#include "llmctl/common/error.h"
#include "llmctl/sim/simulation.h"

using namespace llmctl::sim;

namespace {

constexpr SimTime kInf = SimTime::max();

ModelProfile Model(const std::string& id, uint64_t bytes, double t = 0.05, double a = 0.004,
                   double b = 0.05, int gpus = 1) {
  ModelProfile m;
  m.id = id;
  m.size_bytes = bytes;
  m.per_token_s = t;
  m.resume_a = a;
  m.resume_b = b;
  m.gpus = gpus;
  return m;
}

ServerConfig Server(ServerId id, int slots, std::vector<std::string> dram = {},
                    std::vector<std::string> ssd = {}) {
  ServerConfig s;
  s.id = id;
  s.gpu_slots = slots;
  s.dram_models = std::move(dram);
  s.ssd_models = std::move(ssd);
  return s;
}

Request Req(RequestId id, const std::string& model, double at_s, uint64_t total = 2000,
            uint64_t t_in = 100) {
  return {id, model, FromSeconds(at_s), t_in, total};
}

SimulationConfig Motivating(Policy policy) {
  SimulationConfig c;
  c.models = {Model("A", 140'000'000'000), Model("B", 140'000'000'000)};
  c.servers = {Server(1, 1, {"A"}, {"B"}), Server(2, 1, {"B"})};
  c.warm = {{2, "A"}};
  c.requests = {Req(1, "A", 0), Req(2, "B", 10)};
  c.scheduler.policy = policy;
  return c;
}

// Latest ready instant of victims moved onto one destination, minimised over
// every load order and every use of the destination's idle instances.
SimTime BestGroupCost(const std::vector<SimTime>& resume, const std::vector<SimTime>& load,
                      const std::vector<std::string>& model, SimTime q,
                      std::map<std::string, int> idle) {
  std::vector<int> order(resume.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  SimTime best = kInf;
  do {
    const uint32_t choices = 1u << order.size();
    for (uint32_t use_idle = 0; use_idle < choices; ++use_idle) {
      std::map<std::string, int> left = idle;
      SimTime loads{0}, worst{0};
      bool ok = true;
      for (size_t k = 0; k < order.size() && ok; ++k) {
        const int i = order[k];
        if (use_idle & (1u << k)) {
          if (left[model[i]]-- <= 0) ok = false;
          worst = std::max(worst, resume[i]);
        } else {
          loads += load[i];
          worst = std::max(worst, q + loads + resume[i]);
        }
      }
      if (ok) best = std::min(best, worst);
    }
  } while (std::next_permutation(order.begin(), order.end()));
  return best;
}

// Exhaustive search over direct loads and every (victim -> destination)
// assignment. Mirrors the scheduler's cost model, not its algorithm.
SimTime BruteForceBest(Simulation& sim, const std::string& model) {
  Cluster& c = sim.cluster();
  const Scheduler& sched = sim.scheduler();
  const ModelProfile& m = c.model(model);
  auto load_on = [&](ServerId s, const std::string& x) {
    return TransferTime(c.model(x).size_bytes,
                        sched.beliefs().Get(s).Slowest(c.BestSource(s, x)));
  };
  SimTime best = kInf;
  for (ServerId s : c.server_ids()) {
    const int avail = c.FreeSlots(s) + c.ReclaimableSlots(s, model);
    if (avail >= m.gpus) {
      best = std::min(best, sched.EstimateLoad(model, s).value());
      continue;
    }
    std::vector<SessionId> victims;
    for (const Instance* inst : c.InstancesOn(s)) {
      if (inst->state != InstanceState::kBusy) continue;
      const Session& ss = c.session(inst->session);
      if (ss.status == SessionStatus::kRunning && ss.generating &&
          ss.segment_start <= sim.loop().now()) {
        victims.push_back(ss.id);
      }
    }
    std::vector<ServerId> dests;
    for (ServerId d : c.server_ids()) {
      if (d != s && c.FreeSlots(d) + c.ReclaimableSlots(d) > 0) dests.push_back(d);
    }
    const size_t options = dests.size() + 1;
    size_t combos = 1;
    for (size_t i = 0; i < victims.size(); ++i) combos *= options;
    for (size_t code = 0; code < combos; ++code) {
      std::vector<std::vector<size_t>> groups(dests.size());
      size_t x = code;
      int freed = 0;
      for (size_t i = 0; i < victims.size(); ++i, x /= options) {
        if (x % options == 0) continue;
        groups[x % options - 1].push_back(i);
        freed += c.instance(c.session(victims[i]).instance).slots;
      }
      if (freed < m.gpus - avail) continue;
      SimTime worst{0};
      bool ok = true;
      for (size_t g = 0; g < dests.size() && ok; ++g) {
        if (groups[g].empty()) continue;
        const ServerId d = dests[g];
        int slots = 0;
        std::vector<SimTime> resume, load;
        std::vector<std::string> models;
        for (size_t i : groups[g]) {
          const Session& ss = c.session(victims[i]);
          slots += c.instance(ss.instance).slots;
          resume.push_back(sched.EstimateMigration(ss.id).resume());
          load.push_back(load_on(d, ss.model));
          models.push_back(ss.model);
        }
        if (slots > c.FreeSlots(d) + c.ReclaimableSlots(d)) {
          ok = false;
          break;
        }
        std::map<std::string, int> idle;
        for (const Instance* inst : c.InstancesOn(d)) {
          if (inst->state == InstanceState::kIdle && !inst->reserved) ++idle[inst->model];
        }
        worst = std::max(worst, BestGroupCost(resume, load, models, sched.QueueDelay(d), idle));
      }
      if (!ok || code == 0) continue;
      best = std::min(best, std::max(worst, sched.QueueDelay(s)) + load_on(s, model));
    }
  }
  return best;
}

// A random, partially busy cluster of up to three servers, frozen mid-run.
SimulationConfig RandomCluster(std::mt19937_64& rng, Policy policy) {
  SimulationConfig c;
  c.scheduler.policy = policy;
  const int n_models = 3 + static_cast<int>(rng() % 3);
  for (int i = 0; i < n_models; ++i) {
    c.models.push_back(Model("m" + std::to_string(i), (5 + rng() % 36) * 1'000'000'000ULL,
                             0.02 + static_cast<double>(rng() % 6) / 100,
                             0.0005 * static_cast<double>(1 + rng() % 8),
                             static_cast<double>(rng() % 10) / 100));
  }
  const int n_servers = 2 + static_cast<int>(rng() % 2);
  RequestId next = 1;
  for (int s = 0; s < n_servers; ++s) {
    ServerConfig sc = Server(s, 1 + static_cast<int>(rng() % 4));
    sc.bandwidths.ssd_to_dram = (4 + rng() % 12) * 1e9;
    sc.bandwidths.net_to_ssd = (1 + rng() % 3) * 1e9;
    for (const ModelProfile& m : c.models) {
      switch (rng() % 3) {
        case 0:
          sc.dram_models.push_back(m.id);
          break;
        case 1:
          sc.ssd_models.push_back(m.id);
          break;
        default:
          break;
      }
    }
    const int warm = static_cast<int>(rng() % (sc.gpu_slots + 1));
    for (int w = 0; w < warm; ++w) {
      const std::string& model = c.models[rng() % n_models].id;
      c.warm.push_back({s, model});
      // Most warm instances are put to work right away.
      if (rng() % 4 != 0) c.requests.push_back(Req(next++, model, 0, 100000, 50 + rng() % 500));
    }
    c.servers.push_back(std::move(sc));
  }
  // A few arrivals that need loads, so some queues are non-empty.
  for (int i = 0, n = static_cast<int>(rng() % 3); i < n; ++i) {
    c.requests.push_back(Req(next++, c.models[rng() % n_models].id, 0.5, 100000));
  }
  return c;
}

std::string Residency(Simulation& sim) { return sim.Residency().dump(); }

}  // namespace

TEST_CASE("a model on SSD of a single empty server loads from SSD") {
  SimulationConfig c;
  c.models = {Model("m", 24'000'000'000)};
  c.servers = {Server(0, 2, {}, {"m"})};
  Simulation sim(c);
  Plan p = sim.scheduler().SelectServer("m");
  CHECK(p.action == Action::kLoadSsd);
  CHECK(p.server == 0);
  CHECK(p.estimate == FromSeconds(2.0));
}

TEST_CASE("motivating plan migrates A out of S2") {
  Simulation sim(Motivating(Policy::kLiveMigration));
  sim.RunUntil(FromSeconds(10) - SimTime(1));
  Plan p = sim.scheduler().SelectServer("B");
  CHECK(p.action == Action::kMigrateThenLoad);
  CHECK(p.server == 2);
  REQUIRE(p.victims.size() == 1);
  CHECK(p.victims[0].dest == 1);
  CHECK(p.victims[0].model == "A");
  // A loads from DRAM on S1; B loads from DRAM on S2.
  CHECK(p.victims[0].load == TransferTime(140'000'000'000, 32e9));
  CHECK(p.load == TransferTime(140'000'000'000, 32e9));

  Simulation pre(Motivating(Policy::kPreemption));
  pre.RunUntil(FromSeconds(10) - SimTime(1));
  Plan pp = pre.scheduler().SelectServer("B");
  CHECK(pp.action == Action::kPreemptThenLoad);
  CHECK(pp.estimate == pp.load);
}

TEST_CASE("plan cost equals exhaustive enumeration on small clusters") {
  std::mt19937_64 rng(2024);
  int migrations = 0;
  for (int trial = 0; trial < 300; ++trial) {
    CAPTURE(trial);
    SimulationConfig c = RandomCluster(rng, Policy::kLiveMigration);
    Simulation sim(c);
    sim.RunUntil(FromSeconds(1 + static_cast<double>(rng() % 20)));
    const std::string model = c.models[rng() % c.models.size()].id;
    Plan p = sim.scheduler().SelectServer(model);
    const SimTime want = BruteForceBest(sim, model);
    if (p.action == Action::kPend) {
      CHECK(want == kInf);
      continue;
    }
    migrations += p.action == Action::kMigrateThenLoad;
    CHECK(p.estimate == want);
  }
  CHECK(migrations >= 10);
}

TEST_CASE("availability policy never plans a migration") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    SimulationConfig c = RandomCluster(rng, Policy::kAvailability);
    Simulation sim(c);
    sim.RunUntil(FromSeconds(5));
    for (const ModelProfile& m : c.models) {
      Action a = sim.scheduler().SelectServer(m.id).action;
      CHECK(a != Action::kMigrateThenLoad);
      CHECK(a != Action::kPreemptThenLoad);
    }
  }
}

TEST_CASE("scaling every bandwidth keeps the selected server") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    SimulationConfig c;
    c.models = {Model("m", (1 + rng() % 100) * 1'000'000'000ULL)};
    for (int s = 0; s < 4; ++s) {
      ServerConfig sc = Server(s, 2);
      sc.bandwidths.net_to_ssd = (1 + rng() % 50) * 1e8;
      sc.bandwidths.ssd_to_dram = (1 + rng() % 50) * 1e9;
      sc.bandwidths.dram_to_gpu = (1 + rng() % 50) * 1e9;
      if (rng() % 3 == 0) sc.dram_models = {"m"};
      else if (rng() % 2 == 0) sc.ssd_models = {"m"};
      c.servers.push_back(sc);
    }
    Simulation base(c);
    Plan p = base.scheduler().SelectServer("m");
    for (double k : {0.25, 3.0, 40.0}) {
      SimulationConfig scaled = c;
      for (const ServerConfig& sc : c.servers) scaled.beliefs[sc.id] = sc.bandwidths.Scaled(k);
      Simulation sim(scaled);
      Plan q = sim.scheduler().SelectServer("m");
      CHECK(q.server == p.server);
      CHECK(q.action == p.action);
    }
  }
}

TEST_CASE("estimated startup equals simulated startup on an idle cluster") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    SimulationConfig c;
    c.models = {Model("m", (1 + rng() % 200) * 997'000'003ULL)};
    for (int s = 0; s < 3; ++s) {
      ServerConfig sc = Server(s, 1 + static_cast<int>(rng() % 3));
      sc.bandwidths.net_to_ssd = (1 + rng() % 30) * 1.1e8;
      sc.bandwidths.ssd_to_dram = (1 + rng() % 30) * 1.3e9;
      sc.bandwidths.dram_to_gpu = (1 + rng() % 30) * 1.7e9;
      const int tier = static_cast<int>(rng() % 3);
      if (tier == 0) sc.dram_models = {"m"};
      if (tier == 1) sc.ssd_models = {"m"};
      c.servers.push_back(sc);
    }
    c.scheduler.policy = static_cast<Policy>(rng() % 4);
    const double arrival = static_cast<double>(rng() % 1000) / 7;
    c.requests = {Req(1, "m", arrival, 10)};
    c.timeout = std::chrono::hours(10);
    Simulation sim(c);
    sim.Run();
    const RequestRecord& rec = sim.router().record(1);
    REQUIRE(rec.status == RequestStatus::kCompleted);
    REQUIRE(sim.scheduler().decisions().size() == 1);
    const Plan& p = sim.scheduler().decisions().begin()->second.plan;
    CHECK(rec.startup(c.timeout).count() == p.estimate.count());
    CHECK(sim.Audit().empty());
  }
}

TEST_CASE("migration estimates stay within one token time of a resume") {
  SimulationConfig c;
  for (int i = 0; i < 6; ++i) {
    c.models.push_back(Model("m" + std::to_string(i), 20'000'000'000, 0.03 + 0.01 * i,
                             0.001 * (i + 1), 0.02 * i));
  }
  // Each model is cached on one server only, so moving sessions pays off.
  for (int s = 0; s < 3; ++s) {
    c.servers.push_back(Server(s, 2, {"m" + std::to_string(2 * s), "m" + std::to_string(2 * s + 1)}));
  }
  c.servers.push_back(Server(3, 2));
  std::mt19937_64 rng(4);
  for (RequestId r = 1; r <= 60; ++r) {
    c.requests.push_back(Req(r, "m" + std::to_string(rng() % 6),
                             static_cast<double>(rng() % 600000) / 1000, 200 + rng() % 3000,
                             1 + rng() % 1000));
  }
  Simulation sim(c);
  int checked = 0;
  for (double t = 10; t < 900 && checked < 200; t += 7.3) {
    sim.RunUntil(FromSeconds(t));
    for (const auto& [id, s] : sim.cluster().sessions()) {
      if (s.status != SessionStatus::kRunning || !s.generating || s.segment_start > FromSeconds(t)) {
        continue;
      }
      const ModelProfile& m = sim.cluster().model(s.model);
      MigrationEstimate e = sim.scheduler().EstimateMigration(id);
      SimTime actual = ResumeRoundTime(m, s.t_in + sim.cluster().TokensAt(s, FromSeconds(t)),
                                       c.migration.network_bytes_per_s);
      CHECK(std::chrono::abs(e.resume() - actual) <= m.token_time());
      ++checked;
    }
  }
  CHECK(checked >= 100);
  CHECK(sim.scheduler().stats().migrate_decisions > 0);
}

TEST_CASE("recovery from an empty store is clean") {
  SimulationConfig c;
  c.models = {Model("m", 1'000'000'000)};
  c.servers = {Server(0, 1)};
  Simulation sim(c);
  EventLoop loop;
  Cluster cluster(&loop, c.servers, c.models);
  Router router(&loop, &cluster, c.timeout);
  MigrationEngine engine(&loop, &cluster, &router, {});
  StatusStore store;
  Scheduler s(&loop, &cluster, &router, &engine, &store, {});
  s.Recover();
  CHECK(s.decisions().empty());
  CHECK(s.pending().empty());
  CHECK(s.Audit().empty());
  CHECK(s.beliefs().Has(0));
}

TEST_CASE("pending requests are served when slots free up") {
  for (Policy policy : {Policy::kAvailability, Policy::kLocality, Policy::kPreemption,
                        Policy::kLiveMigration}) {
    CAPTURE(PolicyName(policy));
    SimulationConfig c;
    c.models = {Model("a", 2'000'000'000), Model("b", 2'000'000'000)};
    c.servers = {Server(0, 1, {"a", "b"})};
    c.requests = {Req(1, "a", 0, 400), Req(2, "b", 1, 400), Req(3, "a", 2, 100)};
    c.scheduler.policy = policy;
    Simulation sim(c);
    sim.Run();
    for (RequestId r = 1; r <= 3; ++r) {
      CHECK(sim.router().record(r).status == RequestStatus::kCompleted);
    }
    CHECK(sim.Audit().empty());
  }
}

TEST_CASE("crash-point sweep resends once and converges to the crash-free state") {
  for (Policy policy : {Policy::kPreemption, Policy::kLiveMigration, Policy::kAvailability}) {
    SimulationConfig base = Motivating(policy);
    base.requests.push_back(Req(3, "A", 30, 500));
    base.requests.push_back(Req(4, "B", 31, 500));
    Simulation clean(base);
    clean.Run();
    REQUIRE(clean.Audit().empty());
    const std::string want = Residency(clean);
    for (CrashPoint point : {CrashPoint::kBeforePersist, CrashPoint::kAfterPersist,
                             CrashPoint::kAfterInstruct, CrashPoint::kBeforeCompletionPersist}) {
      for (int nth = 1; nth <= 4; ++nth) {
        CAPTURE(PolicyName(policy));
        CAPTURE(CrashPointName(point));
        CAPTURE(nth);
        SimulationConfig c = base;
        c.crash_point = point;
        c.crash_nth = nth;
        c.audit_each_event = true;
        Simulation sim(c);
        sim.Run();
        CHECK(sim.Audit().empty());
        CHECK(Residency(sim) == want);
        for (RequestId r = 1; r <= 4; ++r) {
          CHECK(sim.router().record(r).status == clean.router().record(r).status);
        }
      }
    }
  }
}

TEST_CASE("crashed decisions are delivered exactly once") {
  SimulationConfig c = Motivating(Policy::kLiveMigration);
  c.crash_point = CrashPoint::kAfterPersist;
  c.trace = true;
  Simulation sim(c);
  sim.Run();
  CHECK(sim.crashes() == 1);
  CHECK(sim.scheduler().stats().recoveries == 1);
  const std::string trace = sim.loop().TraceJsonLines();
  size_t resends = 0;
  for (size_t at = trace.find("\"Resend\""); at != std::string::npos;
       at = trace.find("\"Resend\"", at + 1)) {
    ++resends;
  }
  CHECK(resends == 1);
  for (const auto& [id, d] : sim.scheduler().decisions()) {
    CHECK(sim.cluster().instructions_received(id) == 1);
  }
  CHECK(sim.Audit().empty());
}

TEST_CASE("policy and action names round trip") {
  for (Policy p : {Policy::kAvailability, Policy::kLocality, Policy::kPreemption,
                   Policy::kLiveMigration}) {
    CHECK(ParsePolicy(PolicyName(p)) == p);
  }
  CHECK(ParsePolicy("lm") == Policy::kLiveMigration);
  CHECK_THROWS_AS(ParsePolicy("fastest"), llmctl::ConfigError);
  CHECK(ParseAction("MIGRATE_THEN_LOAD") == Action::kMigrateThenLoad);
  CHECK(ParseCrashPoint("after_instruct") == CrashPoint::kAfterInstruct);
}

TEST_CASE("decisions survive a JSON round trip") {
  Decision d;
  d.id = 9;
  d.request = 4;
  d.model = "B";
  d.state = DecisionState::kInstructed;
  d.plan.action = Action::kMigrateThenLoad;
  d.plan.server = 2;
  d.plan.source = LoadSource::kDram;
  d.plan.estimate = SimTime(123);
  d.plan.victims.push_back({7, "A", 1, false, SimTime(5), SimTime(6), SimTime(11)});
  d.migrations = {3};
  Decision back = DecisionFromJson(nlohmann::json::parse(DecisionToJson(d).dump()));
  CHECK(DecisionToJson(back) == DecisionToJson(d));
}
