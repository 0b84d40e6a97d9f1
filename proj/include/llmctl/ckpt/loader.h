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
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "llmctl/ckpt/chunk_pool.h"
#include "llmctl/ckpt/device_memory.h"
#include "llmctl/ckpt/format.h"
#include "llmctl/ckpt/object_store.h"

namespace llmctl::ckpt {

// Storage tiers, slowest first. A load always walks every tier between its
// source and destination.
enum class Tier { kObjectStore = 0, kSsd = 1, kDramPool = 2, kDevice = 3 };

const char* TierName(Tier tier);
Tier ParseTier(const std::string& name);

struct LoaderConfig {
  uint64_t chunk_size = 16ull << 20;
  // Worker count for the hop that lands on each tier.
  std::map<Tier, int> workers_per_tier = {
      {Tier::kSsd, 4}, {Tier::kDramPool, 4}, {Tier::kDevice, 4}};
  bool direct_io = true;

  int WorkersFor(Tier dest) const;
  void Validate() const;
};

// One chunk of one partition travelling through the pipeline.
struct ChunkRef {
  uint32_t device_id = 0;
  uint64_t offset = 0;
  uint64_t len = 0;
  uint64_t seq = 0;  // position in the model-wide chunk list
};

// Splits every partition into chunk_size pieces; only the last chunk of a
// partition may be short.
std::vector<ChunkRef> PlanChunks(const PartitionLayout& layout, uint64_t chunk_size);

struct LoadReport {
  std::string model_id;
  std::string loader;
  uint64_t bytes = 0;
  uint64_t chunks = 0;
  int64_t wall_time_ns = 0;
  // Per hop ("ssd->dram_pool", ...): span from the first chunk entering the
  // hop to the last chunk leaving it.
  std::map<std::string, int64_t> per_tier_time_ns;
  bool direct_io = false;
  // Direct I/O was requested but the filesystem or layout did not allow it.
  bool direct_io_fallback = false;
  // Chunks a hop picked up before the previous hop had finished them.
  uint64_t pipeline_violations = 0;

  double ThroughputBytesPerSec() const;
};

// Multi-tier checkpoint loader for one server: object store -> SSD ->
// DRAM chunk pool -> device memory, one worker group and one chunk queue
// per hop. Load() blocks until the model is resident at the destination.
// Loads of distinct models may run concurrently; a second concurrent load
// of the same model is rejected.
class CheckpointLoader {
 public:
  CheckpointLoader(LoaderConfig config, std::filesystem::path ssd_root, ChunkPool* pool,
                   DeviceMemory* device, ObjectStore* object_store = nullptr);
  ~CheckpointLoader();

  LoadReport Load(const std::string& model_id, Tier src, Tier dest);

  bool IsResident(const std::string& model_id, Tier tier) const;
  // Layout of a model resident in the pool or on SSD.
  PartitionLayout LayoutOf(const std::string& model_id) const;
  // Drops the model from the pool and device tiers.
  void Evict(const std::string& model_id);

  const std::filesystem::path& ssd_root() const { return ssd_root_; }
  const LoaderConfig& config() const { return config_; }

 private:
  PartitionLayout FetchLayout(const std::string& model_id, Tier src);

  LoaderConfig config_;
  std::filesystem::path ssd_root_;
  ChunkPool* pool_;
  DeviceMemory* device_;
  ObjectStore* object_store_;

  mutable std::mutex mu_;
  std::set<std::string> in_flight_;
  std::map<std::string, PartitionLayout> pool_layouts_;
};

}  // namespace llmctl::ckpt
