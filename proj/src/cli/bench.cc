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

#include "llmctl/cli/bench.h"

#include <algorithm>

#include "llmctl/ckpt/chunk_pool.h"
#include "llmctl/ckpt/device_memory.h"
#include "llmctl/ckpt/file_io.h"
#include "llmctl/ckpt/format.h"
#include "llmctl/ckpt/synthetic.h"

namespace llmctl::cli {

namespace {

constexpr uint64_t kMiB = 1ull << 20;

void DropModelCache(const std::filesystem::path& dir, const ckpt::PartitionLayout& layout) {
  for (const auto& [device, len] : layout.partitions) {
    ckpt::DropPageCache(ckpt::PartitionPath(dir, device));
  }
}

uint32_t ChunksNeeded(const ckpt::PartitionLayout& layout, uint64_t chunk_size) {
  return static_cast<uint32_t>(ckpt::PlanChunks(layout, chunk_size).size());
}

std::vector<StageResult> TimeStages(const std::filesystem::path& root, const std::string& model_id,
                                    const std::vector<ckpt::Stage>& stages, int reps,
                                    const ckpt::LoaderConfig& config) {
  const std::filesystem::path dir = ckpt::ModelDir(root, model_id);
  ckpt::PartitionLayout layout = ckpt::ReadIndex(ckpt::IndexPath(dir));
  ckpt::ChunkPool pool(config.chunk_size, std::max<uint32_t>(1, ChunksNeeded(layout, config.chunk_size)));
  ckpt::DeviceMemory device;
  ckpt::CheckpointLoader loader(config, root, &pool, &device);

  std::vector<StageResult> out;
  for (ckpt::Stage s : stages) out.push_back({s, {}, 0, true});
  // One untimed pass faults in device memory so the first stage is not
  // charged for it.
  for (ckpt::Stage s : stages) {
    DropModelCache(dir, layout);
    ckpt::RunStage(s, model_id, loader, pool, device);
    device.Release(model_id);
  }
  // Rotate the starting stage each rep so order effects spread evenly.
  for (int rep = 0; rep < reps; ++rep) {
    for (size_t k = 0; k < out.size(); ++k) {
      StageResult& r = out[(k + static_cast<size_t>(rep)) % out.size()];
      DropModelCache(dir, layout);
      ckpt::LoadReport report = ckpt::RunStage(r.stage, model_id, loader, pool, device);
      device.Release(model_id);
      r.throughputs.push_back(report.ThroughputBytesPerSec());
      if (report.direct_io_fallback) r.measured = false;
    }
  }
  loader.Evict(model_id);
  for (StageResult& r : out) r.median = Median(r.throughputs);
  return out;
}

ckpt::SourceCheckpoint SmallTensorModel(const std::string& model_id) {
  ckpt::SourceCheckpoint src;
  src.model_id = model_id;
  src.tensors.reserve(10000);
  for (int i = 0; i < 10000; ++i) {
    ckpt::SourceTensor t;
    t.name = "t" + std::to_string(i);
    t.dtype = ckpt::DType::kF32;
    t.shape = {1024};
    t.payload.resize(4096);
    ckpt::FillPseudoRandom(t.payload, static_cast<uint64_t>(i) + 1);
    src.tensors.push_back(std::move(t));
  }
  return src;
}

}  // namespace

double Median(std::vector<double> xs) {
  if (xs.empty()) return 0;
  std::sort(xs.begin(), xs.end());
  const size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : (xs[n / 2 - 1] + xs[n / 2]) / 2;
}

ckpt::PartitionLayout PrepareCorpus(const BenchOptions& options) {
  const std::filesystem::path dir = ckpt::ModelDir(options.root, options.model_id);
  if (!std::filesystem::exists(ckpt::IndexPath(dir))) {
    if (!options.generate) {
      throw std::runtime_error("no converted model at " + dir.string());
    }
    ckpt::SyntheticSpec spec;
    spec.model_id = options.model_id;
    spec.num_devices = options.num_devices;
    spec.num_tensors = options.num_tensors;
    spec.total_bytes = options.corpus_bytes;
    spec.seed = options.seed;
    ckpt::Convert(ckpt::MakeSyntheticCheckpoint(spec), options.root);
  }
  return ckpt::ReadIndex(ckpt::IndexPath(dir));
}

BenchResult RunLoadBench(const BenchOptions& options) {
  options.loader.Validate();
  ckpt::PartitionLayout layout = PrepareCorpus(options);

  BenchResult result;
  result.bytes = layout.TotalBytes();
  result.tensors = layout.index.size();
  for (const auto& e : layout.index) result.small_tensors += e.size < kMiB;
  result.stages =
      TimeStages(options.root, options.model_id, options.stages, options.reps, options.loader);

  if (options.small_tensor_baseline) {
    const std::string small_id = options.model_id + "_small";
    if (!std::filesystem::exists(ckpt::IndexPath(ckpt::ModelDir(options.root, small_id)))) {
      ckpt::Convert(SmallTensorModel(small_id), options.root);
    }
    result.small_model = TimeStages(options.root, small_id,
                                    {ckpt::Stage::kReadByTensor, ckpt::Stage::kPipeline},
                                    options.reps, options.loader);
  }

  {
    const std::filesystem::path dir = ckpt::ModelDir(options.root, options.model_id);
    ckpt::ChunkPool pool(options.loader.chunk_size,
                         std::max<uint32_t>(1, ChunksNeeded(layout, options.loader.chunk_size)));
    ckpt::DeviceMemory device;
    ckpt::CheckpointLoader loader(options.loader, options.root, &pool, &device);
    DropModelCache(dir, layout);
    result.tier_load = loader.Load(options.model_id, options.src, options.dest);
    loader.Evict(options.model_id);
  }
  return result;
}

nlohmann::ordered_json LoadReportJson(const ckpt::LoadReport& report) {
  nlohmann::ordered_json j;
  j["model_id"] = report.model_id;
  j["loader"] = report.loader;
  j["bytes"] = report.bytes;
  j["chunks"] = report.chunks;
  j["wall_time_ns"] = report.wall_time_ns;
  j["throughput_bytes_per_s"] = report.ThroughputBytesPerSec();
  j["per_tier_time_ns"] = report.per_tier_time_ns;
  j["direct_io"] = report.direct_io;
  j["direct_io_fallback"] = report.direct_io_fallback;
  j["pipeline_violations"] = report.pipeline_violations;
  return j;
}

namespace {

nlohmann::ordered_json StagesJson(const std::vector<StageResult>& stages) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const StageResult& r : stages) {
    out.push_back({{"stage", ckpt::StageName(r.stage)},
                   {"measured", r.measured},
                   {"median_bytes_per_s", r.median},
                   {"bytes_per_s", r.throughputs}});
  }
  return out;
}

}  // namespace

nlohmann::ordered_json BenchJson(const BenchResult& result) {
  nlohmann::ordered_json j;
  j["bytes"] = result.bytes;
  j["tensors"] = result.tensors;
  j["tensors_below_1mib"] = result.small_tensors;
  j["stages"] = StagesJson(result.stages);
  if (!result.small_model.empty()) j["small_tensor_model"] = StagesJson(result.small_model);
  j["tier_load"] = LoadReportJson(result.tier_load);
  return j;
}

}  // namespace llmctl::cli
