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

#include "llmctl/sim/workload.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "json.hpp"
#include "llmctl/common/error.h"

namespace llmctl::sim {

namespace {

uint64_t StreamSeed(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

uint64_t DrawLength(std::mt19937_64& rng, double mean, double sigma) {
  if (sigma <= 0) return std::max<uint64_t>(1, static_cast<uint64_t>(std::llround(mean)));
  std::lognormal_distribution<double> dist(std::log(mean) - sigma * sigma / 2, sigma);
  return std::max<uint64_t>(1, static_cast<uint64_t>(std::llround(dist(rng))));
}

}  // namespace

LengthProfile ShortProfile() { return LengthProfile{}; }

LengthProfile LongProfile() {
  LengthProfile p;
  p.name = "long";
  p.input_mean = 256;
  p.output_mean = 3.7 * ShortProfile().output_mean;
  return p;
}

LengthProfile ParseLengthProfile(const std::string& name) {
  if (name == "short") return ShortProfile();
  if (name == "long") return LongProfile();
  throw ConfigError("unknown length profile '" + name + "'");
}

void TraceSpec::Validate() const {
  if (!(rps > 0)) throw ConfigError("trace rps must be > 0");
  if (!(cv >= 0)) throw ConfigError("trace cv must be >= 0");
  if (!(duration_s >= 0)) throw ConfigError("trace duration must be >= 0");
  if (models.empty() && duration_s > 0) throw ConfigError("trace needs at least one model");
  for (const ModelWeight& m : models) {
    if (!(m.weight > 0)) throw ConfigError("model weight for " + m.model + " must be > 0");
  }
  if (!(lengths.input_mean >= 1) || !(lengths.output_mean >= 1)) {
    throw ConfigError("length means must be >= 1");
  }
}

std::vector<double> GenInterArrivals(double rps, double cv, size_t count, uint64_t seed) {
  std::vector<double> gaps(count);
  if (cv == 0) {
    std::fill(gaps.begin(), gaps.end(), 1.0 / rps);
    return gaps;
  }
  double shape = 1.0 / (cv * cv);
  std::gamma_distribution<double> gamma(shape, 1.0 / (rps * shape));
  std::mt19937_64 rng(StreamSeed(seed, 0));
  for (double& g : gaps) g = gamma(rng);
  return gaps;
}

std::vector<Request> GenTrace(const TraceSpec& spec) {
  spec.Validate();
  std::vector<Request> trace;
  if (spec.duration_s == 0) return trace;
  std::vector<double> weights;
  for (const ModelWeight& m : spec.models) weights.push_back(m.weight);
  std::discrete_distribution<size_t> pick(weights.begin(), weights.end());
  std::mt19937_64 arrivals(StreamSeed(spec.seed, 0));
  std::mt19937_64 models(StreamSeed(spec.seed, 1));
  std::mt19937_64 lengths(StreamSeed(spec.seed, 2));
  const double shape = spec.cv > 0 ? 1.0 / (spec.cv * spec.cv) : 1.0;
  std::gamma_distribution<double> gamma(shape, 1.0 / (spec.rps * shape));

  long double t = 0;
  for (RequestId id = 1;; ++id) {
    t += spec.cv == 0 ? 1.0L / spec.rps : static_cast<long double>(gamma(arrivals));
    if (t >= spec.duration_s) break;
    Request r;
    r.id = id;
    r.arrival = FromSeconds(t);
    r.model = spec.models[pick(models)].model;
    r.t_in = DrawLength(lengths, spec.lengths.input_mean, spec.lengths.input_sigma);
    r.total_tokens = DrawLength(lengths, spec.lengths.output_mean, spec.lengths.output_sigma);
    trace.push_back(std::move(r));
  }
  return trace;
}

std::string TraceToJsonLines(const std::vector<Request>& trace) {
  std::string out;
  for (const Request& r : trace) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["model"] = r.model;
    j["arrival_ns"] = r.arrival.count();
    j["t_in"] = r.t_in;
    j["total_tokens"] = r.total_tokens;
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<Request> TraceFromJsonLines(const std::string& text) {
  std::vector<Request> trace;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    Request r;
    r.id = j.at("id").get<RequestId>();
    r.model = j.at("model").get<std::string>();
    r.arrival = SimTime(j.at("arrival_ns").get<int64_t>());
    r.t_in = j.at("t_in").get<uint64_t>();
    r.total_tokens = j.at("total_tokens").get<uint64_t>();
    trace.push_back(std::move(r));
  }
  return trace;
}

PlacementSpec Place(const std::vector<PlacementModel>& models,
                    const std::map<ServerId, uint64_t>& ssd_capacity) {
  PlacementSpec spec;
  if (ssd_capacity.empty()) {
    for (const PlacementModel& m : models) spec.net_only.push_back(m.model);
    return spec;
  }
  std::vector<ServerId> servers;
  std::map<ServerId, uint64_t> left = ssd_capacity;
  for (const auto& [id, cap] : ssd_capacity) servers.push_back(id);
  const int n = static_cast<int>(servers.size());

  double mean_weight = 0;
  for (const PlacementModel& m : models) mean_weight += m.weight;
  mean_weight = models.empty() ? 1 : mean_weight / static_cast<double>(models.size());

  size_t cursor = 0;
  for (const PlacementModel& m : models) {
    int want = static_cast<int>(std::lround(m.weight / mean_weight));
    want = std::clamp(want, 1, n);
    spec.replicas[m.model] = want;
    int placed = 0;
    for (int r = 0; r < want; ++r) {
      for (int probe = 0; probe < n; ++probe) {
        ServerId s = servers[(cursor + probe) % n];
        auto& held = spec.ssd[s];
        if (left[s] < m.size_bytes ||
            std::find(held.begin(), held.end(), m.model) != held.end()) {
          continue;
        }
        held.push_back(m.model);
        left[s] -= m.size_bytes;
        cursor = (cursor + probe + 1) % n;
        ++placed;
        break;
      }
    }
    if (placed == 0) spec.net_only.push_back(m.model);
  }
  return spec;
}

}  // namespace llmctl::sim
