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

#include <fstream>
#include <random>

#include "doctest.h"
#include "llmctl/common/error.h"
#include "llmctl/sim/estimator.h"
#include "llmctl/sim/status_store.h"
#include "test_util.h"

using namespace llmctl::sim;

namespace {

ModelProfile Model(uint64_t bytes, double t = 0.1, double a = 0.01, double b_r = 0.2) {
  ModelProfile m;
  m.id = "m";
  m.size_bytes = bytes;
  m.per_token_s = t;
  m.resume_a = a;
  m.resume_b = b_r;
  return m;
}

}  // namespace

TEST_CASE("load estimates use the slowest path from the source") {
  Bandwidths bw;
  bw.ssd_to_dram = 12e9;
  bw.net_to_ssd = 1.25e9;
  LoadEstimate ssd = EstimateLoad(Model(24'000'000'000), 0, LoadSource::kSsd, bw, SimTime(0));
  CHECK(ssd.value() == FromSeconds(2.0));
  CHECK(ssd.value_seconds() == doctest::Approx(2.0));

  LoadEstimate net = EstimateLoad(Model(12'500'000'000), 0, LoadSource::kNet, bw, FromSeconds(2));
  CHECK(net.value() == FromSeconds(12.0));

  LoadEstimate dram = EstimateLoad(Model(32'000'000'000), 0, LoadSource::kDram, bw, SimTime(0));
  CHECK(dram.value() == FromSeconds(1.0));
  CHECK(EstimateLoad(Model(1), 0, LoadSource::kDram, bw, SimTime(-5)).q == SimTime(0));
}

TEST_CASE("load estimates match q + n/b on random inputs") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> bw_dist(1e8, 1e11);
  for (int i = 0; i < 1000; ++i) {
    Bandwidths bw;
    bw.net_to_ssd = bw_dist(rng);
    bw.ssd_to_dram = bw_dist(rng);
    bw.dram_to_gpu = bw_dist(rng);
    const uint64_t n = rng() % 200'000'000'000ULL;
    const double q_s = static_cast<double>(rng() % 100'000) / 1000.0;
    const auto src = static_cast<LoadSource>(rng() % 3);
    LoadEstimate e = EstimateLoad(Model(n), 0, src, bw, FromSeconds(q_s));
    double slowest = bw.dram_to_gpu;
    if (src != LoadSource::kDram) slowest = std::min(slowest, bw.ssd_to_dram);
    if (src == LoadSource::kNet) slowest = std::min(slowest, bw.net_to_ssd);
    const double want = q_s + static_cast<double>(n) / slowest;
    CHECK(e.value_seconds() == doctest::Approx(want).epsilon(1e-9));
    CHECK(std::abs(ToSeconds(e.value()) - want) <= 2e-9);
  }
}

TEST_CASE("migration estimate") {
  MigrationEstimate e = EstimateMigration(Model(1), 7, 512, FromSeconds(30));
  CHECK(e.t_out == doctest::Approx(300));
  CHECK(e.resume_seconds() == doctest::Approx(8.32));
  CHECK(e.resume() == FromSeconds(8.32));

  MigrationEstimate zero = EstimateMigration(Model(1), 7, 512, SimTime(0));
  CHECK(zero.t_out == 0);
  CHECK(zero.resume_seconds() == doctest::Approx(0.01 * 512 + 0.2));
}

TEST_CASE("EMA tracks a bandwidth drop") {
  BandwidthBeliefs beliefs(0.3);
  Bandwidths bw;
  bw.ssd_to_dram = 10e9;
  beliefs.Set(0, bw);
  const double truth = 5e9;
  const uint64_t bytes = 10'000'000'000;
  for (int k = 1; k <= 20; ++k) {
    Path p = beliefs.OnLoadReport(0, LoadSource::kSsd, bytes, TransferTime(bytes, truth));
    CHECK(p == Path::kSsdToDram);
    const double b = beliefs.Get(0).ssd_to_dram;
    CHECK(b > 0);
    if (k >= 10) CHECK(b == doctest::Approx(truth).epsilon(0.05));
  }
  // Other paths are untouched.
  CHECK(beliefs.Get(0).dram_to_gpu == Bandwidths{}.dram_to_gpu);
}

TEST_CASE("EMA fixed point and positivity") {
  CHECK(EmaUpdate(4.0, 4.0, 0.3) == 4.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> pos(1e-3, 1e12), alpha(1e-3, 1.0);
  for (int i = 0; i < 1000; ++i) CHECK(EmaUpdate(pos(rng), pos(rng), alpha(rng)) > 0);
  CHECK_THROWS_AS(BandwidthBeliefs(0.0), llmctl::ConfigError);
  CHECK_THROWS_AS(BandwidthBeliefs(1.5), llmctl::ConfigError);
  BandwidthBeliefs b;
  CHECK_THROWS_AS(b.Get(9), llmctl::LookupError);
  b.Set(0, Bandwidths{});
  const double before = b.Get(0).net_to_ssd;
  b.OnLoadReport(0, LoadSource::kNet, 0, FromSeconds(1));
  b.OnLoadReport(0, LoadSource::kNet, 100, SimTime(0));
  CHECK(b.Get(0).net_to_ssd == before);
}

TEST_CASE("status store put, erase and scan") {
  StatusStore s;
  s.Put("server/1/queue", 3);
  s.Put("server/0/queue", 1);
  s.Put("model/x", "loaded");
  s.Put("server/1/queue", 4);
  CHECK(s.Get("server/1/queue")->get<int>() == 4);
  auto scan = s.Scan("server/");
  REQUIRE(scan.size() == 2);
  CHECK(scan[0].first == "server/0/queue");
  s.Erase("model/x");
  CHECK_FALSE(s.Get("model/x").has_value());
  CHECK(s.writes() == 5);
  StatusStore replay = StatusStore::FromLog(s.log());
  CHECK(replay.Snapshot() == s.Snapshot());
}

TEST_CASE("status store replays from disk and tolerates a torn tail") {
  llmctl::testing::TempDir dir;
  const auto path = dir.path() / "status.jsonl";
  {
    StatusStore s(path);
    s.Put("a", 1);
    s.Put("b", {{"x", 2}});
    s.Erase("a");
  }
  {
    std::ofstream out(path, std::ios::app);
    out << R"({"op":"put","key":"c","va)";
  }
  StatusStore back = StatusStore::Open(path);
  CHECK_FALSE(back.Get("a").has_value());
  CHECK(back.Get("b")->at("x").get<int>() == 2);
  CHECK_FALSE(back.Get("c").has_value());
  CHECK(back.writes() == 3);

  std::vector<std::string> bad = {"{not json", R"({"op":"put","key":"k","value":1})"};
  CHECK_THROWS_AS(StatusStore::FromLog(bad), llmctl::FormatError);
  CHECK_THROWS_AS(StatusStore::Open(dir.path() / "missing"), llmctl::LookupError);
}
