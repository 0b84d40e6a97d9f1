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

#include "llmctl/sim/estimator.h"

#include "llmctl/common/error.h"

namespace llmctl::sim {

LoadEstimate EstimateLoad(const ModelProfile& model, ServerId server, LoadSource source,
                          const Bandwidths& believed, SimTime q) {
  LoadEstimate e;
  e.server = server;
  e.source = source;
  e.q = q < SimTime(0) ? SimTime(0) : q;
  e.n = model.size_bytes;
  e.b = believed.Slowest(source);
  return e;
}

MigrationEstimate EstimateMigration(const ModelProfile& model, SessionId session, uint64_t t_in,
                                    SimTime d) {
  MigrationEstimate e;
  e.session = session;
  e.t_in = t_in;
  e.d = d;
  e.t_out = ToSeconds(d) / model.per_token_s;
  e.a = model.resume_a;
  e.b_r = model.resume_b;
  return e;
}

double EmaUpdate(double belief, double measured, double alpha) {
  return belief + alpha * (measured - belief);
}

BandwidthBeliefs::BandwidthBeliefs(double alpha) : alpha_(alpha) {
  if (!(alpha > 0 && alpha <= 1)) throw ConfigError("EMA alpha must be in (0, 1]");
}

const Bandwidths& BandwidthBeliefs::Get(ServerId server) const {
  auto it = beliefs_.find(server);
  if (it == beliefs_.end()) throw LookupError("no bandwidth belief for server " + std::to_string(server));
  return it->second;
}

Path BandwidthBeliefs::OnLoadReport(ServerId server, LoadSource source, uint64_t bytes,
                                    SimTime duration) {
  Bandwidths& b = beliefs_.at(server);
  Path path = b.Bottleneck(source);
  if (bytes == 0 || duration <= SimTime(0)) return path;
  double measured = static_cast<double>(bytes) / ToSeconds(duration);
  b.Set(path, EmaUpdate(b.Get(path), measured, alpha_));
  return path;
}

}  // namespace llmctl::sim
