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

#include <utility>
#include <vector>

#include "json.hpp"
#include "llmctl/sim/router.h"

namespace llmctl::cli {

struct LatencyStats {
  size_t count = 0;
  double mean = 0;
  double p50 = 0;
  double p95 = 0;
  double p99 = 0;
  double max = 0;
};

// Nearest-rank percentile of an unsorted sample; 0 when empty.
double Percentile(std::vector<double> xs, double p);
LatencyStats Summarize(const std::vector<double>& xs);
// (fraction, value) every `step` of the empirical CDF, endpoints included.
std::vector<std::pair<double, double>> CdfPoints(const std::vector<double>& xs, double step = 0.05);

nlohmann::ordered_json StatsJson(const LatencyStats& s);

// Per-request latency samples in seconds. Timed-out requests count at the
// timeout; failed requests are excluded.
struct LatencySamples {
  std::vector<double> startup;
  std::vector<double> pause;
  std::vector<double> startup_plus_pause;
};
LatencySamples CollectLatencies(const sim::Router& router);

}  // namespace llmctl::cli
