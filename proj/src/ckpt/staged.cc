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

#include "llmctl/ckpt/staged.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <thread>

#include "llmctl/ckpt/file_io.h"
#include "llmctl/common/error.h"

namespace llmctl::ckpt {

namespace {

using Clock = std::chrono::steady_clock;

struct FreeDeleter {
  void operator()(std::byte* p) const { std::free(p); }
};
using AlignedBytes = std::unique_ptr<std::byte, FreeDeleter>;

AlignedBytes AllocAligned(uint64_t size) {
  auto* p = static_cast<std::byte*>(std::aligned_alloc(4096, AlignUp(std::max<uint64_t>(size, 1), 4096)));
  if (p == nullptr) throw std::bad_alloc();
  return AlignedBytes(p);
}

int64_t ElapsedNs(Clock::time_point since) {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - since).count();
}

std::map<uint32_t, File> OpenPartitions(const std::filesystem::path& dir,
                                        const PartitionLayout& layout, bool direct) {
  std::map<uint32_t, File> files;
  for (const auto& [device, len] : layout.partitions) {
    files.emplace(device, File::OpenRead(PartitionPath(dir, device), direct));
  }
  return files;
}

std::map<uint32_t, std::span<std::byte>> AllocateRegions(DeviceMemory& device,
                                                         const std::string& model_id,
                                                         const PartitionLayout& layout) {
  device.Release(model_id);
  std::map<uint32_t, std::span<std::byte>> regions;
  for (const auto& [d, len] : layout.partitions) {
    device.Allocate(model_id, d, len);
    regions[d] = device.Region(model_id, d);
  }
  return regions;
}

// Only tensor bytes are read per tensor; clear the gaps between them so the
// region ends up identical to a whole-partition copy.
void ZeroPadding(const PartitionLayout& layout,
                 const std::map<uint32_t, std::span<std::byte>>& regions) {
  std::map<uint32_t, std::vector<std::pair<uint64_t, uint64_t>>> used;
  for (const TensorIndexEntry& e : layout.index) used[e.device_id].emplace_back(e.offset, e.size);
  for (const auto& [d, region] : regions) {
    auto& ranges = used[d];
    std::sort(ranges.begin(), ranges.end());
    uint64_t pos = 0;
    for (const auto& [off, size] : ranges) {
      if (off > pos) std::memset(region.data() + pos, 0, off - pos);
      pos = std::max(pos, off + size);
    }
    if (pos < region.size()) std::memset(region.data() + pos, 0, region.size() - pos);
  }
}

// Runs `fn(chunk_index, worker)` over all chunks with `workers` threads
// pulling from a shared counter.
template <typename Fn>
void ParallelChunks(size_t n_chunks, int workers, Fn fn) {
  std::atomic<size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto body = [&](int w) {
    for (size_t i = next.fetch_add(1); i < n_chunks; i = next.fetch_add(1)) {
      try {
        fn(i, w);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
        next.store(n_chunks);
      }
    }
  };
  if (workers <= 1) {
    body(0);
  } else {
    std::vector<std::jthread> threads;
    for (int w = 0; w < workers; ++w) threads.emplace_back(body, w);
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace

std::vector<Stage> StagedLoaders() {
  return {Stage::kReadByTensor, Stage::kBulkRead,   Stage::kDirectIo,
          Stage::kMultiThread,  Stage::kPinnedPool, Stage::kPipeline};
}

const char* StageName(Stage stage) {
  switch (stage) {
    case Stage::kReadByTensor:
      return "ReadByTensor";
    case Stage::kBulkRead:
      return "BulkRead";
    case Stage::kDirectIo:
      return "+DirectIO";
    case Stage::kMultiThread:
      return "+MultiThread";
    case Stage::kPinnedPool:
      return "+PinnedPool";
    case Stage::kPipeline:
      return "+Pipeline";
  }
  return "?";
}

Stage ParseStage(const std::string& name) {
  std::string key = name;
  if (!key.empty() && key[0] == '+') key.erase(0, 1);
  for (Stage s : StagedLoaders()) {
    std::string n = StageName(s);
    if (n[0] == '+') n.erase(0, 1);
    if (n == key) return s;
  }
  throw std::invalid_argument("unknown loader stage '" + name + "'");
}

LoadReport RunStage(Stage stage, const std::string& model_id, CheckpointLoader& loader,
                    ChunkPool& pool, DeviceMemory& device) {
  const LoaderConfig& config = loader.config();
  const std::filesystem::path dir = ModelDir(loader.ssd_root(), model_id);
  // Every stage starts from SSD with nothing cached in the faster tiers.
  loader.Evict(model_id);

  if (stage == Stage::kPipeline) {
    LoadReport report = loader.Load(model_id, Tier::kSsd, Tier::kDevice);
    report.loader = StageName(stage);
    return report;
  }

  const auto start = Clock::now();
  PartitionLayout layout = ReadIndex(IndexPath(dir));
  LoadReport report;
  report.model_id = model_id;
  report.loader = StageName(stage);
  report.bytes = layout.TotalBytes();
  auto regions = AllocateRegions(device, model_id, layout);

  try {
    if (stage == Stage::kReadByTensor) {
      auto files = OpenPartitions(dir, layout, /*direct=*/false);
      // Each tensor gets its own freshly allocated host buffer, as a
      // framework loader does when it materializes tensors one by one.
      for (const TensorIndexEntry& e : layout.index) {
        std::vector<std::byte> buf(e.size);
        files.at(e.device_id).ReadAt(buf, e.offset);
        DeviceMemory::CopyIn(regions.at(e.device_id), e.offset, buf, /*pinned_source=*/false);
      }
      ZeroPadding(layout, regions);
      report.chunks = layout.index.size();
      report.wall_time_ns = ElapsedNs(start);
      report.per_tier_time_ns["ssd->device"] = report.wall_time_ns;
      return report;
    }

    const bool direct = stage != Stage::kBulkRead && config.direct_io &&
                        layout.alignment % 4096 == 0;
    auto files = OpenPartitions(dir, layout, direct);
    bool all_direct = !files.empty();
    for (const auto& [d, f] : files) all_direct = all_direct && f.direct();
    if (stage != Stage::kBulkRead) {
      report.direct_io = direct && all_direct;
      report.direct_io_fallback = config.direct_io && !report.direct_io && !files.empty();
    }
    std::vector<ChunkRef> chunks = PlanChunks(layout, config.chunk_size);
    report.chunks = chunks.size();
    const int workers = stage >= Stage::kMultiThread ? config.WorkersFor(Tier::kDramPool) : 1;

    if (stage == Stage::kPinnedPool) {
      pool.Pin(model_id);
      std::vector<ChunkId> ids;
      try {
        ids = pool.Allocate(model_id, static_cast<uint32_t>(chunks.size()));
        ParallelChunks(chunks.size(), workers, [&](size_t i, int) {
          const ChunkRef& c = chunks[i];
          auto dst = pool.Chunk(ids[i]).first(c.len);
          files.at(c.device_id).ReadAt(dst, c.offset);
          DeviceMemory::CopyIn(regions.at(c.device_id), c.offset, dst, /*pinned_source=*/true);
        });
      } catch (...) {
        pool.Unpin(model_id);
        pool.Free(model_id);
        throw;
      }
      pool.Unpin(model_id);
      pool.Free(model_id);
    } else {
      // Pageable per-worker buffers; aligned so direct reads can use them.
      std::vector<AlignedBytes> buffers;
      for (int w = 0; w < workers; ++w) buffers.push_back(AllocAligned(config.chunk_size));
      ParallelChunks(chunks.size(), workers, [&](size_t i, int w) {
        const ChunkRef& c = chunks[i];
        std::span<std::byte> dst(buffers[w].get(), c.len);
        files.at(c.device_id).ReadAt(dst, c.offset);
        DeviceMemory::CopyIn(regions.at(c.device_id), c.offset, dst, /*pinned_source=*/false);
      });
    }
  } catch (const TierIoError&) {
    device.Release(model_id);
    throw;
  } catch (const std::exception& e) {
    device.Release(model_id);
    throw TierIoError("ssd->device", e.what());
  }
  report.wall_time_ns = ElapsedNs(start);
  report.per_tier_time_ns["ssd->device"] = report.wall_time_ns;
  return report;
}

}  // namespace llmctl::ckpt
