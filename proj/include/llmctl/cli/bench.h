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
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "llmctl/ckpt/loader.h"
#include "llmctl/ckpt/staged.h"

namespace llmctl::cli {

struct BenchOptions {
  // Directory holding converted models (<root>/<model_id>/...).
  std::filesystem::path root;
  std::string model_id = "bench";
  // Generate and convert a synthetic corpus into `root` when the model is
  // missing.
  bool generate = true;
  uint64_t corpus_bytes = 1ull << 30;
  uint32_t num_tensors = 600;
  uint32_t num_devices = 2;
  uint64_t seed = 1;
  int reps = 5;
  std::vector<ckpt::Stage> stages = ckpt::StagedLoaders();
  ckpt::LoaderConfig loader;
  // Also time ReadByTensor vs Pipeline on a 10,000 x 4 KiB model.
  bool small_tensor_baseline = false;
  // Extra multi-tier load through the pipeline loader, e.g. ssd -> dram_pool.
  ckpt::Tier src = ckpt::Tier::kSsd;
  ckpt::Tier dest = ckpt::Tier::kDevice;
};

struct StageResult {
  ckpt::Stage stage;
  std::vector<double> throughputs;  // bytes/s, one per rep
  double median = 0;
  bool measured = true;  // false when direct I/O silently fell back
};

struct BenchResult {
  uint64_t bytes = 0;
  uint64_t tensors = 0;
  uint64_t small_tensors = 0;  // tensors below 1 MiB
  std::vector<StageResult> stages;
  std::vector<StageResult> small_model;  // empty unless requested
  ckpt::LoadReport tier_load;
};

double Median(std::vector<double> xs);

// Generates the synthetic corpus (if needed) and returns its layout.
ckpt::PartitionLayout PrepareCorpus(const BenchOptions& options);

// Runs every stage `reps` times, interleaving stages within each rep and
// dropping the page cache before each run.
BenchResult RunLoadBench(const BenchOptions& options);

nlohmann::ordered_json BenchJson(const BenchResult& result);
nlohmann::ordered_json LoadReportJson(const ckpt::LoadReport& report);

}  // namespace llmctl::cli
