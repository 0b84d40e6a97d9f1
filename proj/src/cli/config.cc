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

#include "llmctl/cli/config.h"

#include <fstream>
#include <set>

#include "llmctl/common/error.h"

namespace llmctl::cli {

namespace {

using nlohmann::json;

void CheckKeys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <class T>
T Get(const json& j, const std::string& key, const std::string& where, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <class T>
T Require(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
  return Get<T>(j, key, where, T{});
}

sim::Bandwidths ParseBandwidths(const json& j, const std::string& where, sim::Bandwidths b) {
  CheckKeys(j, where, {"net_to_ssd", "ssd_to_dram", "dram_to_gpu"});
  b.net_to_ssd = Get<double>(j, "net_to_ssd", where, b.net_to_ssd);
  b.ssd_to_dram = Get<double>(j, "ssd_to_dram", where, b.ssd_to_dram);
  b.dram_to_gpu = Get<double>(j, "dram_to_gpu", where, b.dram_to_gpu);
  for (sim::Path p : {sim::Path::kNetToSsd, sim::Path::kSsdToDram, sim::Path::kDramToGpu}) {
    if (!(b.Get(p) > 0)) throw ConfigError(where + ": bandwidths must be > 0");
  }
  return b;
}

const std::set<std::string> kServerKeys = {"id",           "gpu_slots",   "dram_capacity_bytes",
                                           "ssd_capacity_bytes", "bandwidths", "dram_models",
                                           "ssd_models"};

sim::ServerConfig ParseServer(const json& j, const std::string& where,
                              const sim::ServerConfig& defaults) {
  CheckKeys(j, where, kServerKeys);
  sim::ServerConfig s = defaults;
  s.id = Get<int>(j, "id", where, s.id);
  s.gpu_slots = Get<int>(j, "gpu_slots", where, s.gpu_slots);
  s.dram_capacity = Get<uint64_t>(j, "dram_capacity_bytes", where, s.dram_capacity);
  s.ssd_capacity = Get<uint64_t>(j, "ssd_capacity_bytes", where, s.ssd_capacity);
  if (j.contains("bandwidths")) {
    s.bandwidths = ParseBandwidths(j.at("bandwidths"), where + ".bandwidths", s.bandwidths);
  }
  s.dram_models = Get<std::vector<std::string>>(j, "dram_models", where, s.dram_models);
  s.ssd_models = Get<std::vector<std::string>>(j, "ssd_models", where, s.ssd_models);
  if (s.gpu_slots < 1) throw ConfigError(where + ": gpu_slots must be >= 1");
  return s;
}

sim::LengthProfile ParseLengths(const json& j, const std::string& where) {
  if (j.is_string()) return sim::ParseLengthProfile(j.get<std::string>());
  CheckKeys(j, where, {"base", "input_mean", "input_sigma", "output_mean", "output_sigma"});
  sim::LengthProfile p = sim::ParseLengthProfile(Get<std::string>(j, "base", where, "short"));
  p.input_mean = Get<double>(j, "input_mean", where, p.input_mean);
  p.input_sigma = Get<double>(j, "input_sigma", where, p.input_sigma);
  p.output_mean = Get<double>(j, "output_mean", where, p.output_mean);
  p.output_sigma = Get<double>(j, "output_sigma", where, p.output_sigma);
  return p;
}

}  // namespace

ExperimentConfig ParseExperimentConfig(const json& j) {
  CheckKeys(j, "config",
            {"servers", "server_defaults", "models", "trace", "requests", "warm", "placement",
             "policy", "seeds", "scheduler", "migration", "timeout_s", "belief_scale", "failures",
             "crash", "write_events"});
  ExperimentConfig c;

  sim::ServerConfig defaults;
  if (j.contains("server_defaults")) {
    const json& d = j.at("server_defaults");
    if (d.contains("id")) throw ConfigError("server_defaults: 'id' is not allowed");
    defaults = ParseServer(d, "server_defaults", defaults);
  }
  const json servers = Get<json>(j, "servers", "config", json::array());
  if (!servers.is_array() || servers.empty()) throw ConfigError("config: 'servers' must be a non-empty array");
  for (size_t i = 0; i < servers.size(); ++i) {
    const std::string where = "servers[" + std::to_string(i) + "]";
    if (!servers[i].contains("id")) throw ConfigError(where + ": missing key 'id'");
    c.servers.push_back(ParseServer(servers[i], where, defaults));
  }

  const json models = Get<json>(j, "models", "config", json::array());
  if (!models.is_array() || models.empty()) throw ConfigError("config: 'models' must be a non-empty array");
  for (size_t i = 0; i < models.size(); ++i) {
    const std::string where = "models[" + std::to_string(i) + "]";
    const json& m = models[i];
    CheckKeys(m, where,
              {"id", "size_bytes", "gpus", "per_token_s", "resume_a", "resume_b", "weight"});
    ModelEntry e;
    e.profile.id = Require<std::string>(m, "id", where);
    e.profile.size_bytes = Require<uint64_t>(m, "size_bytes", where);
    e.profile.gpus = Get<int>(m, "gpus", where, e.profile.gpus);
    e.profile.per_token_s = Get<double>(m, "per_token_s", where, e.profile.per_token_s);
    e.profile.resume_a = Get<double>(m, "resume_a", where, e.profile.resume_a);
    e.profile.resume_b = Get<double>(m, "resume_b", where, e.profile.resume_b);
    e.weight = Get<double>(m, "weight", where, e.weight);
    e.profile.Validate();
    if (!(e.weight > 0)) throw ConfigError(where + ": weight must be > 0");
    c.models.push_back(std::move(e));
  }

  if (j.contains("trace")) {
    const json& t = j.at("trace");
    CheckKeys(t, "trace", {"rps", "cv", "duration_s", "lengths"});
    sim::TraceSpec spec;
    spec.rps = Require<double>(t, "rps", "trace");
    spec.cv = Get<double>(t, "cv", "trace", spec.cv);
    spec.duration_s = Require<double>(t, "duration_s", "trace");
    if (t.contains("lengths")) spec.lengths = ParseLengths(t.at("lengths"), "trace.lengths");
    for (const ModelEntry& m : c.models) spec.models.push_back({m.profile.id, m.weight});
    spec.Validate();
    c.trace = spec;
  }
  const json requests = Get<json>(j, "requests", "config", json::array());
  for (size_t i = 0; i < requests.size(); ++i) {
    const std::string where = "requests[" + std::to_string(i) + "]";
    const json& r = requests[i];
    CheckKeys(r, where, {"id", "model", "arrival_s", "t_in", "total_tokens"});
    sim::Request req;
    req.id = Require<uint64_t>(r, "id", where);
    req.model = Require<std::string>(r, "model", where);
    req.arrival = sim::FromSeconds(Require<double>(r, "arrival_s", where));
    req.t_in = Require<uint64_t>(r, "t_in", where);
    req.total_tokens = Require<uint64_t>(r, "total_tokens", where);
    if (req.arrival < sim::SimTime(0)) throw ConfigError(where + ": arrival must be >= 0");
    c.requests.push_back(std::move(req));
  }
  const json warm = Get<json>(j, "warm", "config", json::array());
  for (size_t i = 0; i < warm.size(); ++i) {
    const std::string where = "warm[" + std::to_string(i) + "]";
    CheckKeys(warm[i], where, {"server", "model"});
    c.warm.push_back({Require<int>(warm[i], "server", where),
                      Require<std::string>(warm[i], "model", where)});
  }

  const std::string placement = Get<std::string>(j, "placement", "config", "manual");
  if (placement == "auto") {
    c.auto_placement = true;
  } else if (placement != "manual") {
    throw ConfigError("config.placement must be 'manual' or 'auto'");
  }
  c.policy = sim::ParsePolicy(Get<std::string>(j, "policy", "config", "live_migration"));
  c.seeds = Get<std::vector<uint64_t>>(j, "seeds", "config", c.seeds);
  if (c.seeds.empty()) throw ConfigError("config.seeds must not be empty");

  if (j.contains("scheduler")) {
    const json& s = j.at("scheduler");
    CheckKeys(s, "scheduler", {"max_victims", "ema_alpha", "preempt_recovery"});
    c.scheduler.max_victims = Get<int>(s, "max_victims", "scheduler", c.scheduler.max_victims);
    c.scheduler.ema_alpha = Get<double>(s, "ema_alpha", "scheduler", c.scheduler.ema_alpha);
    c.scheduler.preempt_recovery = sim::ParsePreemptRecovery(
        Get<std::string>(s, "preempt_recovery", "scheduler", "regenerate"));
  }
  if (j.contains("migration")) {
    const json& m = j.at("migration");
    CheckKeys(m, "migration", {"gap_threshold", "max_rounds", "network_bytes_per_s"});
    c.migration.gap_threshold = Get<int64_t>(m, "gap_threshold", "migration", -1);
    c.migration.max_rounds = Get<int>(m, "max_rounds", "migration", c.migration.max_rounds);
    c.migration.network_bytes_per_s =
        Get<double>(m, "network_bytes_per_s", "migration", c.migration.network_bytes_per_s);
  }
  c.timeout_s = Get<double>(j, "timeout_s", "config", c.timeout_s);
  if (!(c.timeout_s > 0)) throw ConfigError("config.timeout_s must be > 0");
  c.belief_scale = Get<double>(j, "belief_scale", "config", c.belief_scale);
  if (!(c.belief_scale > 0)) throw ConfigError("config.belief_scale must be > 0");

  const json failures = Get<json>(j, "failures", "config", json::array());
  for (size_t i = 0; i < failures.size(); ++i) {
    const std::string where = "failures[" + std::to_string(i) + "]";
    CheckKeys(failures[i], where, {"at_s", "server"});
    c.failures.push_back({sim::FromSeconds(Require<double>(failures[i], "at_s", where)),
                          Require<int>(failures[i], "server", where)});
  }
  if (j.contains("crash")) {
    const json& cr = j.at("crash");
    CheckKeys(cr, "crash", {"point", "nth"});
    c.crash_point = sim::ParseCrashPoint(Require<std::string>(cr, "point", "crash"));
    c.crash_nth = Get<int>(cr, "nth", "crash", 1);
    if (c.crash_nth < 1) throw ConfigError("crash.nth must be >= 1");
  }
  c.write_events = Get<bool>(j, "write_events", "config", false);

  // Cross-references.
  std::set<std::string> model_ids;
  for (const ModelEntry& m : c.models) {
    if (!model_ids.insert(m.profile.id).second) throw ConfigError("duplicate model " + m.profile.id);
  }
  std::set<int> server_ids;
  for (const sim::ServerConfig& s : c.servers) {
    if (!server_ids.insert(s.id).second) throw ConfigError("duplicate server " + std::to_string(s.id));
    for (const auto* list : {&s.dram_models, &s.ssd_models}) {
      for (const std::string& m : *list) {
        if (!model_ids.count(m)) throw ConfigError("server " + std::to_string(s.id) + " lists unknown model " + m);
      }
    }
  }
  for (const sim::Request& r : c.requests) {
    if (!model_ids.count(r.model)) throw ConfigError("request names unknown model " + r.model);
  }
  for (const sim::WarmInstance& w : c.warm) {
    if (!model_ids.count(w.model) || !server_ids.count(w.server)) {
      throw ConfigError("warm instance refers to an unknown server or model");
    }
  }
  for (const sim::FailureEvent& f : c.failures) {
    if (!server_ids.count(f.server)) throw ConfigError("failure names unknown server");
  }
  return c;
}

ExperimentConfig LoadExperimentConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return ParseExperimentConfig(j);
}

sim::SimulationConfig BuildSimulation(const ExperimentConfig& c, sim::Policy policy,
                                      uint64_t seed) {
  sim::SimulationConfig s;
  s.servers = c.servers;
  for (const ModelEntry& m : c.models) s.models.push_back(m.profile);
  if (c.auto_placement) {
    std::vector<sim::PlacementModel> pm;
    for (const ModelEntry& m : c.models) pm.push_back({m.profile.id, m.profile.size_bytes, m.weight});
    std::map<sim::ServerId, uint64_t> capacity;
    for (const sim::ServerConfig& sc : s.servers) capacity[sc.id] = sc.ssd_capacity;
    sim::PlacementSpec placed = sim::Place(pm, capacity);
    for (sim::ServerConfig& sc : s.servers) sc.ssd_models = placed.ssd[sc.id];
  }
  if (c.trace) {
    sim::TraceSpec spec = *c.trace;
    spec.seed = seed;
    s.requests = sim::GenTrace(spec);
  }
  sim::RequestId next = 1;
  for (const sim::Request& r : s.requests) next = std::max(next, r.id + 1);
  for (sim::Request r : c.requests) {
    if (c.trace) r.id = next++;
    s.requests.push_back(std::move(r));
  }
  s.warm = c.warm;
  s.scheduler = c.scheduler;
  s.scheduler.policy = policy;
  s.scheduler.seed = seed;
  s.migration = c.migration;
  s.timeout = sim::FromSeconds(c.timeout_s);
  for (const sim::ServerConfig& sc : s.servers) {
    s.beliefs[sc.id] = sc.bandwidths.Scaled(c.belief_scale);
  }
  s.failures = c.failures;
  s.crash_point = c.crash_point;
  s.crash_nth = c.crash_nth;
  s.trace = c.write_events;
  return s;
}

}  // namespace llmctl::cli
