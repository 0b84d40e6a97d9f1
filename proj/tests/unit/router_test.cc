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

#include "doctest.h"
#include "sim_harness.h"

using namespace llmctl::sim;
using llmctl::testing::MigrationHarness;
using llmctl::testing::Profile;
using llmctl::testing::ServerWith;

TEST_CASE("an idle instance serves a request immediately") {
  MigrationHarness h({ServerWith(1, 1)}, {Profile("m", 1000, 0.1, 0.01, 0)});
  h.cluster.AddWarmInstance(1, "m");
  h.router.Arrive({1, "m", SimTime(0), 10, 20});
  const RequestRecord& r = h.router.record(1);
  CHECK(r.status == RequestStatus::kRunning);
  CHECK(r.startup(h.router.timeout()) == SimTime(0));
  CHECK(h.router.RouteOf(r.session) == 1);
  CHECK(h.needs_load.empty());
}

TEST_CASE("concurrency is one per instance") {
  MigrationHarness h({ServerWith(1, 2)}, {Profile("m", 1000, 0.1, 0.01, 0)});
  h.cluster.AddWarmInstance(1, "m");
  h.router.Arrive({1, "m", SimTime(0), 10, 20});
  h.router.Arrive({2, "m", SimTime(0), 10, 20});
  CHECK(h.router.record(1).status == RequestStatus::kRunning);
  CHECK(h.router.record(2).status == RequestStatus::kWaiting);
  CHECK(h.needs_load == std::vector<RequestId>{2});
  CHECK(h.router.Waiting() == std::vector<RequestId>{2});
  // When the first session finishes its instance is handed over.
  h.loop.RunUntil(std::chrono::seconds(2));
  const SessionId first = h.router.record(1).session;
  const Session& s = h.cluster.session(first);
  REQUIRE(s.status == SessionStatus::kCompleted);
  CHECK(h.router.OfferIdleInstance(s.instance));
  CHECK(h.router.record(2).status == RequestStatus::kRunning);
  CHECK(h.router.record(2).startup(h.router.timeout()) == std::chrono::seconds(2));
}

TEST_CASE("completion closes the record and drops the route") {
  MigrationHarness h({ServerWith(1, 1)}, {Profile("m", 1000, 0.1, 0.01, 0)});
  h.cluster.AddWarmInstance(1, "m");
  h.router.Arrive({1, "m", SimTime(0), 10, 20});
  SessionId sid = h.router.record(1).session;
  h.loop.RunUntilQuiescent();
  const RequestRecord& r = h.router.record(1);
  CHECK(r.status == RequestStatus::kCompleted);
  CHECK(r.completion == std::chrono::seconds(2));
  CHECK(r.migrations == 0);
  CHECK(h.router.RouteOf(sid) == kNoServer);
  CHECK(h.router.Audit().empty());
}

TEST_CASE("a request with no instance times out at 300 s") {
  MigrationHarness h({ServerWith(1, 1)}, {Profile("m", 1000, 0.1, 0.01, 0)});
  std::vector<RequestId> timeouts;
  h.router.set_hooks({[](RequestId) {}, [&](RequestId r) { timeouts.push_back(r); }});
  h.router.Arrive({1, "m", std::chrono::seconds(5), 10, 20});
  h.loop.RunUntilQuiescent();
  const RequestRecord& r = h.router.record(1);
  CHECK(r.status == RequestStatus::kTimedOut);
  CHECK(h.loop.now() == std::chrono::seconds(305));
  CHECK(timeouts == std::vector<RequestId>{1});
  CHECK(r.startup(h.router.timeout()) == std::chrono::seconds(300));
  CHECK(h.router.Waiting().empty());
}

TEST_CASE("report status returns the running duration, frozen at completion") {
  MigrationHarness h({ServerWith(1, 1)}, {Profile("m", 1000, 0.1, 0.01, 0)});
  h.loop.RunUntil(std::chrono::seconds(10));
  h.cluster.AddWarmInstance(1, "m");
  h.router.Arrive({1, "m", h.loop.now(), 10, 500});
  SessionId sid = h.router.record(1).session;
  SimTime last{0};
  for (int t = 11; t <= 40; ++t) {
    h.loop.RunUntil(std::chrono::seconds(t));
    SimTime d = h.router.ReportStatus(sid);
    CHECK(d >= last);
    last = d;
  }
  CHECK(h.router.ReportStatus(sid) == std::chrono::seconds(30));
  h.loop.RunUntil(std::chrono::seconds(200));
  CHECK(h.router.ReportStatus(sid) == std::chrono::seconds(50));
}

TEST_CASE("migrated sessions are rerouted and latency adds up") {
  MigrationHarness h({ServerWith(1, 1), ServerWith(2, 1, {}, {"m"})},
                     {Profile("m", 16000000000ull, 0.05, 0.004, 0.05)});
  h.cluster.AddWarmInstance(1, "m");
  h.router.Arrive({1, "m", SimTime(0), 100, 600});
  SessionId sid = h.router.record(1).session;
  h.loop.RunUntil(std::chrono::seconds(3));
  h.engine.Begin(sid, 2, 0);
  ServerId before = h.router.RouteOf(sid);
  // Route is never empty or doubled while the migration runs.
  while (h.loop.pending() > 0 && h.cluster.session(sid).status != SessionStatus::kCompleted) {
    h.loop.RunUntil(h.loop.now() + std::chrono::milliseconds(10));
    ServerId now = h.router.RouteOf(sid);
    if (h.cluster.session(sid).status == SessionStatus::kCompleted) break;
    CHECK(now != kNoServer);
    CHECK(now == h.cluster.session(sid).server);
    before = now;
  }
  CHECK(before == 2);
  h.loop.RunUntilQuiescent();
  const RequestRecord& r = h.router.record(1);
  REQUIRE(r.status == RequestStatus::kCompleted);
  CHECK(r.migrations == 1);
  CHECK(r.pause > SimTime(0));
  CHECK(r.completion - r.request.arrival ==
        r.startup(h.router.timeout()) + r.pause + 600 * FromSeconds(0.05));
}

TEST_CASE("records export as CSV") {
  MigrationHarness h({ServerWith(1, 1)}, {Profile("m", 1000, 0.1, 0.01, 0)});
  h.cluster.AddWarmInstance(1, "m");
  h.router.Arrive({1, "m", SimTime(0), 10, 20});
  h.router.Arrive({2, "m", FromSeconds(0.5), 10, 20});
  CHECK(h.router.RecordsCsv() ==
        "request_id,model,arrival_ms,startup_ms,pause_ms,status\n"
        "1,m,0.000,0.000,0.000,RUNNING\n"
        "2,m,500.000,,0.000,WAITING\n");
}
