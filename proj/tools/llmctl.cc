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

// llmctl: checkpoint conversion, load benchmarks and scheduling simulations.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "llmctl/ckpt/format.h"
#include "llmctl/ckpt/source.h"
#include "llmctl/ckpt/synthetic.h"
#include "llmctl/cli/bench.h"
#include "llmctl/cli/config.h"
#include "llmctl/cli/experiment.h"

namespace {

using llmctl::cli::ExperimentConfig;

std::vector<std::string> SplitComma(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void WriteText(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string RunStem(llmctl::sim::Policy policy, uint64_t seed) {
  return std::string(llmctl::sim::PolicyName(policy)) + "_seed" + std::to_string(seed);
}

// Prints violations and returns their count.
size_t ReportAudit(const llmctl::cli::RunOutput& run, const std::string& stem) {
  for (const std::string& v : run.audit) std::cerr << stem << ": audit: " << v << "\n";
  return run.audit.size();
}

struct ConvertArgs {
  std::string input;
  std::string out = "converted";
  uint64_t align = llmctl::ckpt::kDefaultAlignment;
  bool synthetic = false;
  std::string model_id = "synthetic";
  uint64_t bytes = 64ull << 20;
  uint32_t tensors = 64;
  uint32_t devices = 1;
  uint64_t seed = 1;
};

int RunConvert(const ConvertArgs& a) {
  llmctl::ckpt::SourceCheckpoint src;
  if (a.synthetic) {
    llmctl::ckpt::SyntheticSpec spec;
    spec.model_id = a.model_id;
    spec.total_bytes = a.bytes;
    spec.num_tensors = a.tensors;
    spec.num_devices = a.devices;
    spec.seed = a.seed;
    src = llmctl::ckpt::MakeSyntheticCheckpoint(spec);
  } else {
    if (a.input.empty()) throw CLI::ValidationError("--input or --synthetic is required");
    src = llmctl::ckpt::ReadSourceCheckpoint(a.input);
  }
  llmctl::ckpt::PartitionLayout layout = llmctl::ckpt::Convert(src, a.out, a.align);
  llmctl::ckpt::ValidateLayout(layout);
  nlohmann::ordered_json j;
  j["model_id"] = layout.model_id;
  j["dir"] = llmctl::ckpt::ModelDir(a.out, layout.model_id).string();
  j["tensors"] = layout.index.size();
  j["bytes"] = layout.TotalBytes();
  j["partitions"] = layout.partitions;
  std::cout << j.dump(2) << "\n";
  return 0;
}

struct BenchArgs {
  std::string model = "bench_data/bench";
  std::string stages = "all";
  std::string tiers = "ssd,device";
  std::string json;
  int reps = 5;
  uint64_t bytes = 1ull << 30;
  uint32_t tensors = 600;
  uint64_t seed = 1;
  bool small_baseline = false;
  bool no_direct = false;
};

int RunBench(const BenchArgs& a) {
  llmctl::cli::BenchOptions options;
  std::filesystem::path model(a.model);
  options.root = model.parent_path().empty() ? std::filesystem::path(".") : model.parent_path();
  options.model_id = model.filename().string();
  options.reps = a.reps;
  options.corpus_bytes = a.bytes;
  options.num_tensors = a.tensors;
  options.seed = a.seed;
  options.small_tensor_baseline = a.small_baseline;
  options.loader.direct_io = !a.no_direct;
  if (a.stages != "all") {
    options.stages.clear();
    for (const std::string& s : SplitComma(a.stages)) {
      options.stages.push_back(llmctl::ckpt::ParseStage(s));
    }
  }
  std::vector<std::string> tiers = SplitComma(a.tiers);
  if (tiers.size() != 2) throw CLI::ValidationError("--tiers expects <src>,<dest>");
  options.src = llmctl::ckpt::ParseTier(tiers[0]);
  options.dest = llmctl::ckpt::ParseTier(tiers[1]);

  llmctl::cli::BenchResult result = llmctl::cli::RunLoadBench(options);
  nlohmann::ordered_json j = llmctl::cli::BenchJson(result);
  for (const auto& r : result.stages) {
    std::printf("%-14s %8.3f GB/s%s\n", llmctl::ckpt::StageName(r.stage), r.median / 1e9,
                r.measured ? "" : "  (direct I/O unavailable; not measured)");
  }
  if (!a.json.empty()) WriteText(a.json, j.dump(2) + "\n");
  return 0;
}

struct SimArgs {
  std::string config;
  std::vector<uint64_t> seeds;
  std::string policy;
  std::string out = "out";
};

std::vector<uint64_t> SeedsFor(const SimArgs& a, const ExperimentConfig& config) {
  return a.seeds.empty() ? config.seeds : a.seeds;
}

int RunSimulate(const SimArgs& a) {
  ExperimentConfig config = llmctl::cli::LoadExperimentConfig(a.config);
  llmctl::sim::Policy policy =
      a.policy.empty() ? config.policy : llmctl::sim::ParsePolicy(a.policy);
  size_t violations = 0;
  for (uint64_t seed : SeedsFor(a, config)) {
    llmctl::cli::RunOutput run = llmctl::cli::RunExperiment(config, policy, seed);
    const std::string stem = RunStem(policy, seed);
    llmctl::cli::WriteRunOutput(run, a.out, stem);
    violations += ReportAudit(run, stem);
    const auto& s = run.summary;
    std::printf("%s: requests=%llu p99_startup=%.3fs p99_startup+pause=%.3fs timeouts=%.4f\n",
                stem.c_str(), static_cast<unsigned long long>(s["requests"].get<uint64_t>()),
                s["startup_s"]["p99"].get<double>(),
                s["startup_plus_pause_s"]["p99"].get<double>(),
                s["timeout_fraction"].get<double>());
  }
  return violations == 0 ? 0 : 1;
}

int RunCompare(const SimArgs& a) {
  ExperimentConfig config = llmctl::cli::LoadExperimentConfig(a.config);
  std::vector<llmctl::sim::Policy> policies;
  if (a.policy.empty() || a.policy == "all") {
    policies = {llmctl::sim::Policy::kAvailability, llmctl::sim::Policy::kLocality,
                llmctl::sim::Policy::kPreemption, llmctl::sim::Policy::kLiveMigration};
  } else {
    for (const std::string& p : SplitComma(a.policy)) {
      policies.push_back(llmctl::sim::ParsePolicy(p));
    }
  }
  std::vector<llmctl::cli::CompareRow> rows;
  size_t violations = 0;
  for (llmctl::sim::Policy policy : policies) {
    llmctl::cli::CompareRow row{policy, {}};
    for (uint64_t seed : SeedsFor(a, config)) {
      row.runs.push_back(llmctl::cli::RunExperiment(config, policy, seed));
      const std::string stem = RunStem(policy, seed);
      llmctl::cli::WriteRunOutput(row.runs.back(), a.out, stem);
      violations += ReportAudit(row.runs.back(), stem);
    }
    rows.push_back(std::move(row));
  }
  const std::string table = llmctl::cli::CompareTable(rows);
  WriteText(std::filesystem::path(a.out) / "compare.json",
            llmctl::cli::CompareJson(rows).dump(2) + "\n");
  WriteText(std::filesystem::path(a.out) / "compare.txt", table);
  std::cout << table;
  return violations == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Serverless LLM control-plane toolkit"};
  app.require_subcommand(1);

  ConvertArgs convert;
  CLI::App* c = app.add_subcommand("convert", "Convert a checkpoint into the loading format");
  c->add_option("--in,--input", convert.input, "Source checkpoint directory");
  c->add_option("--out", convert.out, "Output root directory");
  c->add_option("--align", convert.align, "Tensor alignment in bytes");
  c->add_flag("--synthetic", convert.synthetic, "Generate a synthetic source checkpoint");
  c->add_option("--model-id", convert.model_id, "Model id for --synthetic");
  c->add_option("--bytes", convert.bytes, "Total bytes for --synthetic");
  c->add_option("--tensors", convert.tensors, "Tensor count for --synthetic");
  c->add_option("--devices", convert.devices, "Device count for --synthetic");
  c->add_option("--seed", convert.seed, "Seed for --synthetic");

  BenchArgs bench;
  CLI::App* b = app.add_subcommand("bench-load", "Benchmark the staged checkpoint loaders");
  b->add_option("--model", bench.model, "Converted model directory (generated if missing)");
  b->add_option("--stages", bench.stages, "'all' or a comma list of stages");
  b->add_option("--tiers", bench.tiers, "Source and destination tier for the pipeline load");
  b->add_option("--json", bench.json, "Write the report as JSON");
  b->add_option("--reps", bench.reps, "Repetitions per stage")->check(CLI::PositiveNumber);
  b->add_option("--bytes", bench.bytes, "Corpus size when generating");
  b->add_option("--tensors", bench.tensors, "Tensor count when generating");
  b->add_option("--seed", bench.seed, "Corpus seed when generating");
  b->add_flag("--small-tensor-baseline", bench.small_baseline,
              "Also time a 10,000 x 4 KiB tensor model");
  b->add_flag("--no-direct-io", bench.no_direct, "Disable O_DIRECT reads");

  SimArgs simulate;
  CLI::App* s = app.add_subcommand("simulate", "Run one policy over the configured seeds");
  s->add_option("--config", simulate.config, "Experiment config (JSON)")->required();
  s->add_option("--seed", simulate.seeds, "Seed(s); overrides the config");
  s->add_option("--policy", simulate.policy, "Scheduling policy; overrides the config");
  s->add_option("--out", simulate.out, "Output directory");

  SimArgs compare;
  CLI::App* m = app.add_subcommand("compare", "Run several policies side by side");
  m->add_option("--config", compare.config, "Experiment config (JSON)")->required();
  m->add_option("--seed", compare.seeds, "Seed(s); overrides the config");
  m->add_option("--policy", compare.policy, "'all' or a comma list of policies");
  m->add_option("--out", compare.out, "Output directory");

  CLI11_PARSE(app, argc, argv);
  try {
    if (c->parsed()) return RunConvert(convert);
    if (b->parsed()) return RunBench(bench);
    if (s->parsed()) return RunSimulate(simulate);
    if (m->parsed()) return RunCompare(compare);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "llmctl: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
