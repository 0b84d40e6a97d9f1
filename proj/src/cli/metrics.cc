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

#include "llmctl/cli/metrics.h"

#include <algorithm>
#include <cmath>

namespace llmctl::cli {

double Percentile(std::vector<double> xs, double p) {
  if (xs.empty()) return 0;
  std::sort(xs.begin(), xs.end());
  size_t rank = static_cast<size_t>(std::ceil(p / 100.0 * static_cast<double>(xs.size())));
  rank = std::clamp<size_t>(rank, 1, xs.size());
  return xs[rank - 1];
}

LatencyStats Summarize(const std::vector<double>& xs) {
  LatencyStats s;
  s.count = xs.size();
  if (xs.empty()) return s;
  double sum = 0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  s.p50 = Percentile(xs, 50);
  s.p95 = Percentile(xs, 95);
  s.p99 = Percentile(xs, 99);
  s.max = *std::max_element(xs.begin(), xs.end());
  return s;
}

std::vector<std::pair<double, double>> CdfPoints(const std::vector<double>& xs, double step) {
  std::vector<std::pair<double, double>> out;
  if (xs.empty()) return out;
  const int n = static_cast<int>(std::lround(1.0 / step));
  for (int i = 0; i <= n; ++i) {
    double f = static_cast<double>(i) / n;
    out.emplace_back(f, i == 0 ? *std::min_element(xs.begin(), xs.end()) : Percentile(xs, f * 100));
  }
  return out;
}

nlohmann::ordered_json StatsJson(const LatencyStats& s) {
  return {{"count", s.count}, {"mean", s.mean}, {"p50", s.p50},
          {"p95", s.p95},     {"p99", s.p99},   {"max", s.max}};
}

LatencySamples CollectLatencies(const sim::Router& router) {
  LatencySamples out;
  for (const auto& [id, rec] : router.records()) {
    if (rec.status == sim::RequestStatus::kFailed) continue;
    sim::SimTime startup = rec.startup(router.timeout());
    if (startup < sim::SimTime(0)) continue;
    double s = sim::ToSeconds(startup);
    double p = sim::ToSeconds(rec.pause);
    out.startup.push_back(s);
    out.pause.push_back(p);
    out.startup_plus_pause.push_back(s + p);
  }
  return out;
}

}  // namespace llmctl::cli
