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

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "llmctl/sim/router.h"

namespace llmctl::sim {

// Lognormal input and output length distributions standing in for a dataset.
struct LengthProfile {
  std::string name = "short";
  double input_mean = 128;
  double input_sigma = 0.5;   // of the underlying normal
  double output_mean = 128;   // tokens to generate
  double output_sigma = 0.6;
};

// "short": mean output m; "long": mean output 3.7 * m.
LengthProfile ShortProfile();
LengthProfile LongProfile();
LengthProfile ParseLengthProfile(const std::string& name);

struct ModelWeight {
  std::string model;
  double weight = 1.0;
};

struct TraceSpec {
  double rps = 1.0;
  double cv = 8.0;
  double duration_s = 60.0;
  uint64_t seed = 1;
  std::vector<ModelWeight> models;
  LengthProfile lengths = ShortProfile();

  void Validate() const;
};

// Inter-arrival gaps: Gamma(shape = 1/cv^2, scale = 1/(rps * shape)), or a
// constant 1/rps when cv = 0.
std::vector<double> GenInterArrivals(double rps, double cv, size_t count, uint64_t seed);

// Requests arriving in [0, duration), ids from 1, ordered by arrival.
std::vector<Request> GenTrace(const TraceSpec& spec);

std::string TraceToJsonLines(const std::vector<Request>& trace);
std::vector<Request> TraceFromJsonLines(const std::string& text);

struct PlacementModel {
  std::string model;
  uint64_t size_bytes = 0;
  double weight = 1.0;
};

struct PlacementSpec {
  std::map<std::string, int> replicas;  // requested replica count
  std::map<ServerId, std::vector<std::string>> ssd;  // per server, in placement order
  std::vector<std::string> net_only;  // models with no SSD copy
};

// Replicas per model proportional to popularity (at least one, at most one
// per server), placed round-robin across server SSDs until capacity runs
// out. A replica that does not fit is skipped.
PlacementSpec Place(const std::vector<PlacementModel>& models,
                    const std::map<ServerId, uint64_t>& ssd_capacity);

}  // namespace llmctl::sim
