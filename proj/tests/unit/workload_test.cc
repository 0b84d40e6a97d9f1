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

#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "llmctl/common/error.h"
#include "llmctl/sim/workload.h"

using namespace llmctl::sim;

namespace {

struct Moments {
  double mean = 0;
  double cv = 0;
};

Moments Measure(const std::vector<double>& xs) {
  long double sum = 0, sq = 0;
  for (double x : xs) sum += x;
  const long double mean = sum / xs.size();
  for (double x : xs) sq += (x - mean) * (x - mean);
  const long double sd = std::sqrt(sq / (xs.size() - 1));
  return {static_cast<double>(mean), static_cast<double>(sd / mean)};
}

TraceSpec Spec(double rps, double cv, double duration, uint64_t seed = 1) {
  TraceSpec s;
  s.rps = rps;
  s.cv = cv;
  s.duration_s = duration;
  s.seed = seed;
  s.models = {{"a", 3.0}, {"b", 1.0}};
  return s;
}

}  // namespace

TEST_CASE("inter-arrival gaps have the requested mean and CV") {
  for (double cv : {1.0, 2.0, 8.0}) {
    CAPTURE(cv);
    // Large CVs need many samples for a stable estimate; average a few seeds
    // so a single unlucky draw does not decide the outcome.
    Moments m{0, 0};
    const int seeds = cv > 4 ? 8 : 1;
    for (int s = 1; s <= seeds; ++s) {
      Moments one = Measure(GenInterArrivals(2.0, cv, 400000, static_cast<uint64_t>(s)));
      m.mean += one.mean / seeds;
      m.cv += one.cv / seeds;
    }
    CHECK(m.mean == doctest::Approx(0.5).epsilon(0.02));
    CHECK(m.cv == doctest::Approx(cv).epsilon(0.10));
  }
}

TEST_CASE("gaps match an independently parameterised Gamma sampler") {
  // Oracle: Gamma with mean 1/rps and variance cv^2/rps^2, i.e. shape k and
  // rate k*rps, drawn through std::gamma_distribution's (alpha, beta) form.
  const double rps = 4.0, cv = 3.0;
  const double k = 1.0 / (cv * cv);
  std::mt19937_64 rng(99);
  std::gamma_distribution<double> oracle(k, 1.0 / (k * rps));
  std::vector<double> ref(300000);
  for (double& x : ref) x = oracle(rng);
  Moments want = Measure(ref);
  Moments got = Measure(GenInterArrivals(rps, cv, 300000, 5));
  CHECK(got.mean == doctest::Approx(want.mean).epsilon(0.03));
  CHECK(got.cv == doctest::Approx(want.cv).epsilon(0.10));
}

TEST_CASE("cv of zero gives uniform spacing") {
  std::vector<double> gaps = GenInterArrivals(4.0, 0, 10, 1);
  for (double g : gaps) CHECK(g == 0.25);
  std::vector<Request> trace = GenTrace(Spec(4.0, 0, 2.0));
  REQUIRE(trace.size() == 7);  // 0.25 .. 1.75
  CHECK(trace.front().arrival == FromSeconds(0.25));
  CHECK(trace.back().arrival == FromSeconds(1.75));
}

TEST_CASE("expected request count and ordering") {
  std::vector<Request> trace = GenTrace(Spec(1.4, 1.0, 1000));
  CHECK(trace.size() == doctest::Approx(1400).epsilon(0.1));
  for (size_t i = 0; i < trace.size(); ++i) {
    CHECK(trace[i].id == i + 1);
    CHECK(trace[i].arrival < FromSeconds(1000));
    if (i > 0) CHECK(trace[i - 1].arrival <= trace[i].arrival);
    CHECK(trace[i].t_in >= 1);
    CHECK(trace[i].total_tokens >= 1);
  }
}

TEST_CASE("traces are deterministic under a seed") {
  CHECK(TraceToJsonLines(GenTrace(Spec(2, 8, 500, 3))) ==
        TraceToJsonLines(GenTrace(Spec(2, 8, 500, 3))));
  CHECK(TraceToJsonLines(GenTrace(Spec(2, 8, 500, 3))) !=
        TraceToJsonLines(GenTrace(Spec(2, 8, 500, 4))));
}

TEST_CASE("popularity weights set request shares") {
  std::vector<Request> trace = GenTrace(Spec(50, 1, 2000));
  double a = 0;
  for (const Request& r : trace) a += r.model == "a";
  CHECK(a / trace.size() == doctest::Approx(0.75).epsilon(0.05));
}

TEST_CASE("long profile outputs are 3.7 times the short ones") {
  CHECK(LongProfile().output_mean == doctest::Approx(3.7 * ShortProfile().output_mean));
  TraceSpec s = Spec(20, 1, 2000);
  s.lengths = LongProfile();
  std::vector<Request> lng = GenTrace(s);
  s.lengths = ShortProfile();
  std::vector<Request> shrt = GenTrace(s);
  auto mean_out = [](const std::vector<Request>& t) {
    double sum = 0;
    for (const Request& r : t) sum += static_cast<double>(r.total_tokens);
    return sum / static_cast<double>(t.size());
  };
  CHECK(mean_out(lng) / mean_out(shrt) == doctest::Approx(3.7).epsilon(0.08));
  CHECK_THROWS_AS(ParseLengthProfile("medium"), llmctl::ConfigError);
}

TEST_CASE("trace JSON-lines round trip and empty traces") {
  std::vector<Request> trace = GenTrace(Spec(3, 2, 100));
  std::vector<Request> back = TraceFromJsonLines(TraceToJsonLines(trace));
  REQUIRE(back.size() == trace.size());
  for (size_t i = 0; i < trace.size(); ++i) {
    CHECK(back[i].arrival == trace[i].arrival);
    CHECK(back[i].model == trace[i].model);
    CHECK(back[i].total_tokens == trace[i].total_tokens);
  }
  CHECK(GenTrace(Spec(3, 2, 0)).empty());
  CHECK_THROWS_AS(GenTrace(Spec(0, 2, 10)), llmctl::ConfigError);
  CHECK_THROWS_AS(GenTrace(Spec(1, -1, 10)), llmctl::ConfigError);
}

TEST_CASE("equal popularity places round robin") {
  PlacementSpec p = Place({{"m0", 10, 1}, {"m1", 10, 1}, {"m2", 10, 1}, {"m3", 10, 1}},
                          {{0, 1000}, {1, 1000}});
  CHECK(p.ssd.at(0) == std::vector<std::string>{"m0", "m2"});
  CHECK(p.ssd.at(1) == std::vector<std::string>{"m1", "m3"});
  CHECK(p.net_only.empty());
}

TEST_CASE("models that no longer fit stay network-only") {
  PlacementSpec p = Place({{"m0", 60, 1}, {"m1", 60, 1}, {"m2", 60, 1}, {"m3", 60, 1}},
                          {{0, 100}, {1, 100}});
  CHECK(p.ssd.at(0) == std::vector<std::string>{"m0"});
  CHECK(p.ssd.at(1) == std::vector<std::string>{"m1"});
  CHECK(p.net_only == std::vector<std::string>{"m2", "m3"});
}

TEST_CASE("popular models get more replicas") {
  PlacementSpec p = Place({{"hot", 1, 12}, {"c1", 1, 1}, {"c2", 1, 1}},
                          {{0, 100}, {1, 100}, {2, 100}});
  CHECK(p.replicas.at("hot") == 3);
  CHECK(p.replicas.at("c1") == 1);
  int copies = 0;
  for (const auto& [s, models] : p.ssd) {
    copies += static_cast<int>(std::count(models.begin(), models.end(), "hot"));
  }
  CHECK(copies == 3);
}

TEST_CASE("random placements respect capacity") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<PlacementModel> models;
    const int n_models = 1 + static_cast<int>(rng() % 20);
    for (int i = 0; i < n_models; ++i) {
      models.push_back({"m" + std::to_string(i), 1 + rng() % 100,
                        0.1 + static_cast<double>(rng() % 100) / 10});
    }
    std::map<ServerId, uint64_t> cap;
    const int n_servers = 1 + static_cast<int>(rng() % 6);
    for (int s = 0; s < n_servers; ++s) cap[s] = rng() % 300;
    PlacementSpec p = Place(models, cap);
    std::map<std::string, uint64_t> size;
    for (const auto& m : models) size[m.model] = m.size_bytes;
    std::set<std::string> placed;
    for (const auto& [s, held] : p.ssd) {
      uint64_t used = 0;
      std::set<std::string> unique(held.begin(), held.end());
      CHECK(unique.size() == held.size());
      for (const auto& m : held) used += size[m], placed.insert(m);
      CHECK(used <= cap.at(s));
    }
    for (const auto& m : p.net_only) CHECK(placed.count(m) == 0);
    CHECK(placed.size() + p.net_only.size() == models.size());
  }
}
