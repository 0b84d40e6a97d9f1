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

#include <map>
#include <string>

#include "llmctl/sim/cluster.h"

namespace llmctl::sim {

// q + n / b for one server, b being the believed bottleneck bandwidth of the
// path from `source`.
struct LoadEstimate {
  ServerId server = kNoServer;
  LoadSource source = LoadSource::kNet;
  SimTime q{0};
  uint64_t n = 0;
  double b = 0;

  SimTime transfer() const { return TransferTime(n, b); }
  SimTime value() const { return q + transfer(); }
  double value_seconds() const { return ToSeconds(q) + static_cast<double>(n) / b; }
};

// a * (t_in + t_out) + b_r with t_out = d / t, d being the running duration
// reported by the router.
struct MigrationEstimate {
  SessionId session = 0;
  uint64_t t_in = 0;
  SimTime d{0};
  double t_out = 0;
  double a = 0;
  double b_r = 0;

  double resume_seconds() const { return a * (static_cast<double>(t_in) + t_out) + b_r; }
  SimTime resume() const { return FromSeconds(resume_seconds()); }
};

LoadEstimate EstimateLoad(const ModelProfile& model, ServerId server, LoadSource source,
                          const Bandwidths& believed, SimTime q);
MigrationEstimate EstimateMigration(const ModelProfile& model, SessionId session, uint64_t t_in,
                                    SimTime d);

// b <- b + alpha * (measured - b).
double EmaUpdate(double belief, double measured, double alpha);

// Per-server, per-path bandwidth beliefs refined from observed load times.
class BandwidthBeliefs {
 public:
  explicit BandwidthBeliefs(double alpha = 0.3);

  void Set(ServerId server, const Bandwidths& bandwidths) { beliefs_[server] = bandwidths; }
  const Bandwidths& Get(ServerId server) const;
  bool Has(ServerId server) const { return beliefs_.count(server) != 0; }
  const std::map<ServerId, Bandwidths>& all() const { return beliefs_; }
  double alpha() const { return alpha_; }

  // Folds a completed load into the belief of the path believed to be the
  // bottleneck for that source. Returns the updated path.
  Path OnLoadReport(ServerId server, LoadSource source, uint64_t bytes, SimTime duration);

 private:
  double alpha_;
  std::map<ServerId, Bandwidths> beliefs_;
};

}  // namespace llmctl::sim
