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

#include "llmctl/cli/experiment.h"

#include <cstdio>
#include <fstream>

#include "llmctl/cli/metrics.h"
#include "llmctl/common/error.h"

namespace llmctl::cli {

namespace {

void WriteFile(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

nlohmann::ordered_json CdfJson(const std::vector<double>& xs) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& [f, v] : CdfPoints(xs)) out.push_back({f, v});
  return out;
}

}  // namespace

RunOutput RunExperiment(const ExperimentConfig& config, sim::Policy policy, uint64_t seed) {
  sim::Simulation simulation(BuildSimulation(config, policy, seed));
  simulation.Run();

  RunOutput out;
  out.audit = simulation.Audit();
  out.csv = simulation.router().RecordsCsv();
  if (config.write_events) out.events = simulation.loop().TraceJsonLines();

  const sim::Router& router = simulation.router();
  size_t completed = 0, timed_out = 0, failed = 0, migrated = 0, preempted = 0;
  for (const auto& [id, rec] : router.records()) {
    completed += rec.status == sim::RequestStatus::kCompleted;
    timed_out += rec.status == sim::RequestStatus::kTimedOut;
    failed += rec.status == sim::RequestStatus::kFailed;
    migrated += static_cast<size_t>(rec.migrations);
    preempted += static_cast<size_t>(rec.preemptions);
  }
  const size_t total = router.records().size();
  LatencySamples lat = CollectLatencies(router);

  nlohmann::ordered_json s;
  s["policy"] = sim::PolicyName(policy);
  s["seed"] = seed;
  s["requests"] = total;
  s["completed"] = completed;
  s["timed_out"] = timed_out;
  s["failed"] = failed;
  s["timeout_fraction"] = total == 0 ? 0.0 : static_cast<double>(timed_out) / total;
  s["startup_s"] = StatsJson(Summarize(lat.startup));
  s["pause_s"] = StatsJson(Summarize(lat.pause));
  s["startup_plus_pause_s"] = StatsJson(Summarize(lat.startup_plus_pause));
  s["migrations"] = migrated;
  s["preemptions"] = preempted;
  s["counters"] = simulation.Counters();
  s["startup_cdf"] = CdfJson(lat.startup);
  s["startup_plus_pause_cdf"] = CdfJson(lat.startup_plus_pause);
  s["audit_violations"] = out.audit.size();
  out.summary = std::move(s);
  return out;
}

void WriteRunOutput(const RunOutput& out, const std::filesystem::path& dir,
                    const std::string& stem) {
  std::filesystem::create_directories(dir);
  WriteFile(dir / (stem + ".csv"), out.csv);
  WriteFile(dir / (stem + ".json"), out.summary.dump(2) + "\n");
  if (!out.events.empty()) WriteFile(dir / (stem + ".events.jsonl"), out.events);
}

nlohmann::ordered_json CompareJson(const std::vector<CompareRow>& rows) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const CompareRow& row : rows) {
    nlohmann::ordered_json runs = nlohmann::ordered_json::array();
    double p99 = 0, p99_pause = 0, mean = 0, timeouts = 0;
    uint64_t migrations = 0, preemptions = 0;
    for (const RunOutput& r : row.runs) {
      runs.push_back(r.summary);
      p99 += r.summary["startup_s"]["p99"].get<double>();
      p99_pause += r.summary["startup_plus_pause_s"]["p99"].get<double>();
      mean += r.summary["startup_s"]["mean"].get<double>();
      timeouts += r.summary["timeout_fraction"].get<double>();
      migrations += r.summary["migrations"].get<uint64_t>();
      preemptions += r.summary["preemptions"].get<uint64_t>();
    }
    const double n = row.runs.empty() ? 1.0 : static_cast<double>(row.runs.size());
    out.push_back({{"policy", sim::PolicyName(row.policy)},
                   {"seeds", row.runs.size()},
                   {"mean_startup_s", mean / n},
                   {"p99_startup_s", p99 / n},
                   {"p99_startup_plus_pause_s", p99_pause / n},
                   {"timeout_fraction", timeouts / n},
                   {"migrations", migrations},
                   {"preemptions", preemptions},
                   {"runs", runs}});
  }
  return out;
}

std::string CompareTable(const std::vector<CompareRow>& rows) {
  nlohmann::ordered_json agg = CompareJson(rows);
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-16s %6s %12s %12s %16s %9s %10s %11s\n", "policy", "seeds",
                "mean_start_s", "p99_start_s", "p99_start+pause", "timeouts", "migrations",
                "preemptions");
  out += line;
  for (const auto& r : agg) {
    std::snprintf(line, sizeof(line), "%-16s %6zu %12.3f %12.3f %16.3f %9.4f %10llu %11llu\n",
                  r["policy"].get<std::string>().c_str(), r["seeds"].get<size_t>(),
                  r["mean_startup_s"].get<double>(), r["p99_startup_s"].get<double>(),
                  r["p99_startup_plus_pause_s"].get<double>(), r["timeout_fraction"].get<double>(),
                  static_cast<unsigned long long>(r["migrations"].get<uint64_t>()),
                  static_cast<unsigned long long>(r["preemptions"].get<uint64_t>()));
    out += line;
  }
  return out;
}

}  // namespace llmctl::cli
