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

#include <random>

#include "doctest.h"
#include "llmctl/common/error.h"
#include "llmctl/sim/cluster.h"

using namespace llmctl::sim;

namespace {

ModelProfile Model(const std::string& id, uint64_t bytes, int gpus = 1, double t = 0.1) {
  ModelProfile m;
  m.id = id;
  m.size_bytes = bytes;
  m.gpus = gpus;
  m.per_token_s = t;
  m.resume_a = t / 10;
  m.resume_b = 0.1;
  return m;
}

ServerConfig Server(ServerId id, int slots, std::vector<std::string> ssd = {},
                    std::vector<std::string> dram = {}) {
  ServerConfig s;
  s.id = id;
  s.gpu_slots = slots;
  s.ssd_models = std::move(ssd);
  s.dram_models = std::move(dram);
  return s;
}

}  // namespace

TEST_CASE("a load takes n over the slowest path bandwidth") {
  EventLoop loop;
  Cluster cluster(&loop, {Server(1, 4, {"m", "big"})},
                  {Model("m", 24000000000ull), Model("big", 36000000000ull)});
  std::map<std::string, SimTime> done;
  cluster.set_hooks({[&](const LoadTask& t) { done[t.model] = t.done_at; }, {}, {}});
  SUBCASE("empty queue") {
    cluster.StartLoad(cluster.ReserveInstance(1, "m"), 1);
    loop.RunUntilQuiescent();
    CHECK(done.at("m") == std::chrono::seconds(2));
  }
  SUBCASE("behind a 3 s task") {
    cluster.StartLoad(cluster.ReserveInstance(1, "big"), 1);
    cluster.StartLoad(cluster.ReserveInstance(1, "m"), 2);
    CHECK(cluster.QueueDrainTime(1) == std::chrono::seconds(5));
    loop.RunUntilQuiescent();
    CHECK(done.at("big") == std::chrono::seconds(3));
    CHECK(done.at("m") == std::chrono::seconds(5));
  }
}

TEST_CASE("best source follows residency and the bottleneck path") {
  EventLoop loop;
  Cluster cluster(&loop, {Server(1, 2, {"s"}, {"d"})},
                  {Model("d", 1000), Model("s", 1000), Model("n", 1000)});
  CHECK(cluster.BestSource(1, "d") == LoadSource::kDram);
  CHECK(cluster.BestSource(1, "s") == LoadSource::kSsd);
  CHECK(cluster.BestSource(1, "n") == LoadSource::kNet);
  Bandwidths b;
  CHECK(b.Bottleneck(LoadSource::kNet) == Path::kNetToSsd);
  CHECK(b.Bottleneck(LoadSource::kSsd) == Path::kSsdToDram);
  CHECK(b.Bottleneck(LoadSource::kDram) == Path::kDramToGpu);
  b.Set(Path::kDramToGpu, 1e9);
  CHECK(b.Bottleneck(LoadSource::kSsd) == Path::kDramToGpu);
  CHECK(PathsFrom(LoadSource::kNet).size() == 3);
}

TEST_CASE("random load sequences match a FIFO replay") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    EventLoop loop;
    // Capacities leave no room for caching, so each model's source is fixed.
    ServerConfig server = Server(1, 10000, {"s0", "s1"}, {"d0"});
    server.bandwidths.ssd_to_dram = 2e9 + static_cast<double>(rng() % 1000) * 1e7;
    std::vector<ModelProfile> models = {Model("d0", 5e9), Model("s0", 7e9), Model("s1", 11e9),
                                        Model("n0", 6e9)};
    server.dram_capacity = 5000000000ull;
    server.ssd_capacity = 18000000000ull;
    Cluster cluster(&loop, {server}, models);
    struct Observed { SimTime enq, done; std::string model; };
    std::vector<Observed> seen;
    cluster.set_hooks({[&](const LoadTask& t) {
                         seen.push_back({t.enqueued_at, t.done_at, t.model});
                         cluster.Unload(t.instance);
                       },
                       {}, {}});
    const std::vector<std::string> names = {"d0", "s0", "s1", "n0"};
    std::vector<std::pair<SimTime, std::string>> plan;
    for (int i = 0; i < 30; ++i) {
      plan.emplace_back(SimTime(static_cast<int64_t>(rng() % 60) * 1000000000),
                        names[rng() % names.size()]);
    }
    std::sort(plan.begin(), plan.end());
    for (const auto& [at, model] : plan) {
      std::string m = model;
      loop.Schedule(at, EventKind::kCustom,
                    [&cluster, m] { cluster.StartLoad(cluster.ReserveInstance(1, m), 1); });
    }
    loop.RunUntilQuiescent();

    // Independent replay: one transfer at a time, in arrival order.
    const Bandwidths& b = cluster.server(1).config.bandwidths;
    std::map<std::string, double> rate = {{"d0", b.dram_to_gpu},
                                          {"s0", b.ssd_to_dram},
                                          {"s1", b.ssd_to_dram},
                                          {"n0", b.net_to_ssd}};
    std::map<std::string, uint64_t> size = {{"d0", 5000000000ull}, {"s0", 7000000000ull},
                                            {"s1", 11000000000ull}, {"n0", 6000000000ull}};
    REQUIRE(seen.size() == plan.size());
    SimTime free_at{0};
    for (size_t i = 0; i < plan.size(); ++i) {
      SimTime start = std::max(free_at, plan[i].first);
      free_at = start + TransferTime(size[plan[i].second], rate[plan[i].second]);
      CHECK(seen[i].model == plan[i].second);
      CHECK(seen[i].done.count() == free_at.count());
    }
  }
}

TEST_CASE("token counter advances by whole token times and is additive") {
  TokenCounter c{FromSeconds(0.1), 1000};
  CHECK(c.Advance(FromSeconds(1.0)) == 10);
  CHECK(c.Advance(SimTime(0)) == 0);
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    TokenCounter split{FromSeconds(0.037), 100000};
    SimTime sum{0};
    for (int i = 0; i < 50; ++i) {
      SimTime dt(static_cast<int64_t>(rng() % 500000000));
      sum += dt;
      split.Advance(dt);
    }
    TokenCounter whole{FromSeconds(0.037), 100000};
    whole.Advance(sum);
    CHECK(split.tokens == whole.tokens);
  }
  TokenCounter capped{FromSeconds(0.1), 5};
  CHECK(capped.Advance(std::chrono::seconds(10)) == 5);
  CHECK(capped.done());
  CHECK_THROWS_AS(capped.Advance(SimTime(-1)), llmctl::SchedulingError);
}

TEST_CASE("sessions generate one token per token time and then complete") {
  EventLoop loop;
  Cluster cluster(&loop, {Server(1, 1, {}, {"m"})}, {Model("m", 32000000000ull)});
  std::vector<SessionId> completed;
  std::vector<ServerId> released;
  cluster.set_hooks({[&](const LoadTask& t) { cluster.MarkIdle(t.instance); },
                     [&](Session& s) { completed.push_back(s.id); },
                     [&](ServerId s) { released.push_back(s); }});
  InstanceId inst = cluster.ReserveInstance(1, "m");
  cluster.StartLoad(inst, 1);
  loop.RunUntil(std::chrono::seconds(1));  // DRAM load: 1 s
  REQUIRE(cluster.instance(inst).state == InstanceState::kIdle);
  SessionId sid = cluster.StartSession(inst, 7, 10, 50);
  const Session& s = cluster.session(sid);
  CHECK(cluster.TokensAt(s, FromSeconds(3.05)) == 20);
  CHECK(cluster.NextTokenBoundary(s, FromSeconds(3.05)) == FromSeconds(3.1));
  CHECK_THROWS_AS(cluster.StartSession(inst, 8, 1, 1), llmctl::SchedulingError);
  loop.RunUntil(std::chrono::seconds(6));
  CHECK(completed == std::vector<SessionId>{sid});
  CHECK(cluster.session(sid).status == SessionStatus::kCompleted);
  CHECK(cluster.session(sid).completed_at == std::chrono::seconds(6));
  CHECK(released == std::vector<ServerId>{1});  // the instance went idle
  CHECK(cluster.Audit().empty());
}

TEST_CASE("an idle instance is kept alive for its own load latency") {
  EventLoop loop;
  Cluster cluster(&loop, {Server(1, 2, {"m"})}, {Model("m", 24000000000ull)});
  std::vector<std::pair<SimTime, ServerId>> released;
  cluster.set_hooks({[&](const LoadTask& t) { cluster.MarkIdle(t.instance); },
                     {},
                     [&](ServerId s) { released.emplace_back(loop.now(), s); }});
  InstanceId inst = cluster.ReserveInstance(1, "m");
  cluster.StartLoad(inst, 1);
  CHECK(cluster.FreeSlots(1) == 1);
  loop.RunUntilQuiescent();
  REQUIRE(released.size() == 1);
  CHECK(released[0].first == std::chrono::seconds(4));  // 2 s load + 2 s keep-alive
  CHECK(cluster.FreeSlots(1) == 2);
  CHECK_FALSE(cluster.has_instance(inst));
  // The model stays cached in DRAM.
  CHECK(cluster.BestSource(1, "m") == LoadSource::kDram);
}

TEST_CASE("multi-GPU models take their slots atomically") {
  EventLoop loop;
  Cluster cluster(&loop, {Server(1, 3)}, {Model("two", 1000, 2), Model("one", 1000)});
  cluster.ReserveInstance(1, "two");
  CHECK(cluster.FreeSlots(1) == 1);
  CHECK_THROWS_AS(cluster.ReserveInstance(1, "two"), llmctl::SchedulingError);
  cluster.ReserveInstance(1, "one");
  CHECK(cluster.FreeSlots(1) == 0);
}

TEST_CASE("reclaiming unloads idle instances of other models only") {
  EventLoop loop;
  Cluster cluster(&loop, {Server(1, 2)}, {Model("a", 1000), Model("b", 1000)});
  InstanceId a = cluster.AddWarmInstance(1, "a");
  cluster.AddWarmInstance(1, "b");
  CHECK(cluster.FreeSlots(1) == 0);
  CHECK(cluster.ReclaimableSlots(1, "a") == 1);
  CHECK_FALSE(cluster.ReclaimSlots(1, 2, "a"));
  CHECK(cluster.has_instance(a));
  CHECK(cluster.ReclaimSlots(1, 1, "a"));
  CHECK(cluster.FreeSlots(1) == 1);
  CHECK(cluster.has_instance(a));
  CHECK(cluster.FindIdleInstance("a", 1)->id == a);
}

TEST_CASE("failing a server drops its loads, instances and sessions") {
  EventLoop loop;
  Cluster cluster(&loop, {Server(1, 2, {"m"}), Server(2, 1)}, {Model("m", 12000000000ull)});
  InstanceId warm = cluster.AddWarmInstance(1, "m");
  SessionId sid = cluster.StartSession(warm, 1, 1, 100);
  cluster.StartLoad(cluster.ReserveInstance(1, "m"), 9);
  std::vector<SessionId> lost = cluster.FailServer(1);
  CHECK(lost == std::vector<SessionId>{sid});
  CHECK_FALSE(cluster.server(1).up);
  CHECK(cluster.server(1).load_queue.empty());
  CHECK(cluster.InstancesOn(1).empty());
  CHECK(cluster.session(sid).status == SessionStatus::kFailed);
  CHECK_THROWS_AS(cluster.ReserveInstance(1, "m"), llmctl::SchedulingError);
  loop.RunUntilQuiescent();
  CHECK(cluster.Audit().empty());
}

TEST_CASE("profile and topology validation") {
  EventLoop loop;
  ModelProfile bad = Model("x", 10);
  bad.resume_a = bad.per_token_s;
  CHECK_THROWS_AS(bad.Validate(), llmctl::ConfigError);
  CHECK_THROWS_AS(Cluster(&loop, {Server(1, 1), Server(1, 1)}, {Model("m", 1)}),
                  llmctl::ConfigError);
  ServerConfig tiny = Server(1, 1, {"m"});
  tiny.ssd_capacity = 10;
  CHECK_THROWS_AS(Cluster(&loop, {tiny}, {Model("m", 100)}), llmctl::ConfigError);
}

TEST_CASE("scheduler instructions are counted per decision") {
  EventLoop loop;
  Cluster cluster(&loop, {Server(1, 1)}, {Model("m", 1)});
  CHECK(cluster.instructions_received(4) == 0);
  cluster.ReceiveInstruction(4);
  cluster.ReceiveInstruction(4);
  CHECK(cluster.instructions_received(4) == 2);
}
