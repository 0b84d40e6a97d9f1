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

#include "llmctl/ckpt/loader.h"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <optional>
#include <thread>

#include "llmctl/ckpt/file_io.h"
#include "llmctl/common/error.h"

namespace llmctl::ckpt {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

class IndexQueue {
 public:
  void Push(uint64_t v) {
    {
      std::lock_guard<std::mutex> lock(mu_);
      items_.push_back(v);
    }
    cv_.notify_one();
  }
  std::optional<uint64_t> Pop() {
    std::unique_lock<std::mutex> lock(mu_);
    cv_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    uint64_t v = items_.front();
    items_.pop_front();
    return v;
  }
  void Close() {
    {
      std::lock_guard<std::mutex> lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<uint64_t> items_;
  bool closed_ = false;
};

struct AlignedBuffer {
  explicit AlignedBuffer(uint64_t size)
      : data(static_cast<std::byte*>(std::aligned_alloc(4096, AlignUp(size, 4096)))),
        size(size) {
    if (data == nullptr) throw std::bad_alloc();
  }
  ~AlignedBuffer() { std::free(data); }
  AlignedBuffer(const AlignedBuffer&) = delete;
  AlignedBuffer& operator=(const AlignedBuffer&) = delete;
  std::span<std::byte> first(uint64_t n) { return {data, n}; }

  std::byte* data;
  uint64_t size;
};

std::string HopName(Tier from, Tier to) {
  return std::string(TierName(from)) + "->" + TierName(to);
}

std::string ObjectKey(const std::string& model_id, const fs::path& file) {
  return model_id + "/" + file.filename().string();
}

}  // namespace

const char* TierName(Tier tier) {
  switch (tier) {
    case Tier::kObjectStore:
      return "object_store";
    case Tier::kSsd:
      return "ssd";
    case Tier::kDramPool:
      return "dram_pool";
    case Tier::kDevice:
      return "device";
  }
  return "?";
}

Tier ParseTier(const std::string& name) {
  if (name == "object_store" || name == "net" || name == "s3") return Tier::kObjectStore;
  if (name == "ssd") return Tier::kSsd;
  if (name == "dram" || name == "dram_pool") return Tier::kDramPool;
  if (name == "device" || name == "gpu") return Tier::kDevice;
  throw std::invalid_argument("unknown tier '" + name + "'");
}

int LoaderConfig::WorkersFor(Tier dest) const {
  auto it = workers_per_tier.find(dest);
  return it == workers_per_tier.end() ? 1 : it->second;
}

void LoaderConfig::Validate() const {
  if (chunk_size == 0 || chunk_size % 4096 != 0) {
    throw std::invalid_argument("chunk_size must be a positive multiple of 4096");
  }
  for (const auto& [tier, n] : workers_per_tier) {
    if (n < 1) throw std::invalid_argument(std::string("worker count for ") + TierName(tier) + " must be >= 1");
  }
}

std::vector<ChunkRef> PlanChunks(const PartitionLayout& layout, uint64_t chunk_size) {
  std::vector<ChunkRef> chunks;
  for (const auto& [device, len] : layout.partitions) {
    for (uint64_t off = 0; off < len; off += chunk_size) {
      chunks.push_back({device, off, std::min(chunk_size, len - off), chunks.size()});
    }
  }
  return chunks;
}

double LoadReport::ThroughputBytesPerSec() const {
  return wall_time_ns <= 0 ? 0.0 : static_cast<double>(bytes) * 1e9 / static_cast<double>(wall_time_ns);
}

CheckpointLoader::CheckpointLoader(LoaderConfig config, fs::path ssd_root, ChunkPool* pool,
                                   DeviceMemory* device, ObjectStore* object_store)
    : config_(std::move(config)),
      ssd_root_(std::move(ssd_root)),
      pool_(pool),
      device_(device),
      object_store_(object_store) {
  config_.Validate();
  if (pool_->chunk_size() != config_.chunk_size) {
    throw std::invalid_argument("pool chunk size differs from loader chunk size");
  }
  pool_->set_eviction_listener([this](const std::string& model) {
    std::lock_guard<std::mutex> lock(mu_);
    pool_layouts_.erase(model);
  });
}

CheckpointLoader::~CheckpointLoader() { pool_->set_eviction_listener(nullptr); }

bool CheckpointLoader::IsResident(const std::string& model_id, Tier tier) const {
  switch (tier) {
    case Tier::kObjectStore:
      return object_store_ != nullptr && object_store_->Contains(model_id + "/index.bin");
    case Tier::kSsd:
      return fs::exists(IndexPath(ModelDir(ssd_root_, model_id)));
    case Tier::kDramPool: {
      std::lock_guard<std::mutex> lock(mu_);
      return pool_layouts_.count(model_id) != 0;
    }
    case Tier::kDevice:
      return device_->Has(model_id);
  }
  return false;
}

PartitionLayout CheckpointLoader::LayoutOf(const std::string& model_id) const {
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = pool_layouts_.find(model_id);
    if (it != pool_layouts_.end()) return it->second;
  }
  return ReadIndex(IndexPath(ModelDir(ssd_root_, model_id)));
}

void CheckpointLoader::Evict(const std::string& model_id) {
  pool_->Free(model_id);
  device_->Release(model_id);
  std::lock_guard<std::mutex> lock(mu_);
  pool_layouts_.erase(model_id);
}

PartitionLayout CheckpointLoader::FetchLayout(const std::string& model_id, Tier src) {
  switch (src) {
    case Tier::kObjectStore: {
      if (object_store_ == nullptr) throw LookupError("no object store configured");
      std::string key = model_id + "/index.bin";
      if (!object_store_->Contains(key)) throw LookupError(model_id + " is not in the object store");
      std::vector<std::byte> bytes(object_store_->Size(key));
      object_store_->Get(key, 0, bytes);
      return ParseIndex(bytes);
    }
    case Tier::kSsd: {
      fs::path index = IndexPath(ModelDir(ssd_root_, model_id));
      if (!fs::exists(index)) throw LookupError(model_id + " is not on SSD");
      return ReadIndex(index);
    }
    case Tier::kDramPool: {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = pool_layouts_.find(model_id);
      if (it == pool_layouts_.end()) throw LookupError(model_id + " is not in the DRAM pool");
      return it->second;
    }
    case Tier::kDevice:
      break;
  }
  throw std::invalid_argument("device tier cannot be a load source");
}

LoadReport CheckpointLoader::Load(const std::string& model_id, Tier src, Tier dest) {
  if (static_cast<int>(src) >= static_cast<int>(dest)) {
    throw std::invalid_argument("load source must be a slower tier than its destination");
  }
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (!in_flight_.insert(model_id).second) {
      throw std::logic_error("a load of '" + model_id + "' is already in flight");
    }
  }
  struct InFlightGuard {
    CheckpointLoader* self;
    std::string model;
    ~InFlightGuard() {
      std::lock_guard<std::mutex> lock(self->mu_);
      self->in_flight_.erase(model);
    }
  } guard{this, model_id};

  const auto start = Clock::now();
  PartitionLayout layout = FetchLayout(model_id, src);
  std::vector<ChunkRef> chunks = PlanChunks(layout, config_.chunk_size);

  LoadReport report;
  report.model_id = model_id;
  report.loader = "pipeline";
  report.chunks = chunks.size();
  report.bytes = layout.TotalBytes();

  std::vector<std::pair<Tier, Tier>> hops;
  for (int t = static_cast<int>(src); t < static_cast<int>(dest); ++t) {
    hops.emplace_back(static_cast<Tier>(t), static_cast<Tier>(t + 1));
  }

  const bool uses_pool = dest >= Tier::kDramPool;
  const bool fills_pool = uses_pool && src < Tier::kDramPool;
  fs::path ssd_dir = ModelDir(ssd_root_, model_id);

  // Destination-side resources.
  std::map<uint32_t, File> ssd_writers;
  if (src == Tier::kObjectStore) {
    fs::create_directories(ssd_dir);
    for (const auto& [device, len] : layout.partitions) {
      ssd_writers.emplace(device, File::OpenWrite(PartitionPath(ssd_dir, device), len));
    }
  }
  std::vector<ChunkId> pool_ids;
  if (uses_pool) {
    pool_->Pin(model_id);
    try {
      pool_ids = fills_pool ? pool_->Allocate(model_id, static_cast<uint32_t>(chunks.size()))
                            : pool_->ChunksOf(model_id);
    } catch (...) {
      pool_->Unpin(model_id);
      throw;
    }
    if (!fills_pool) pool_->Touch(model_id);
    if (pool_ids.size() < chunks.size()) {
      pool_->Unpin(model_id);
      throw LookupError(model_id + " is only partially resident in the pool");
    }
  }
  std::map<uint32_t, std::span<std::byte>> regions;
  if (dest == Tier::kDevice) {
    for (const auto& [device, len] : layout.partitions) {
      device_->Allocate(model_id, device, len);
      regions[device] = device_->Region(model_id, device);
    }
  }
  std::map<uint32_t, File> ssd_readers;
  const bool want_direct = config_.direct_io && layout.alignment % 4096 == 0;
  if (src <= Tier::kSsd && dest >= Tier::kDramPool) {
    bool all_direct = true;
    for (const auto& [device, len] : layout.partitions) {
      // When the source is the object store the file was just created by the
      // writer above; reads only touch chunks the previous hop finished.
      File f = File::OpenRead(PartitionPath(ssd_dir, device), want_direct);
      all_direct = all_direct && f.direct();
      ssd_readers.emplace(device, std::move(f));
    }
    report.direct_io = want_direct && all_direct && !layout.partitions.empty();
    report.direct_io_fallback = config_.direct_io && !report.direct_io && !layout.partitions.empty();
  }

  // Pipeline state.
  const size_t n_hops = hops.size();
  std::vector<IndexQueue> queues(n_hops);
  std::vector<std::atomic<int>> stage(chunks.size());
  for (auto& s : stage) s.store(0, std::memory_order_relaxed);
  std::vector<std::atomic<int>> workers_left(n_hops);
  std::vector<std::atomic<int64_t>> hop_first(n_hops), hop_last(n_hops);
  std::atomic<uint64_t> violations{0};
  std::atomic<bool> failed{false};
  std::mutex error_mu;
  std::exception_ptr error;
  std::string error_hop;

  auto now_ns = [&] {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - start).count();
  };

  auto transfer = [&](size_t hop, const ChunkRef& c, AlignedBuffer* scratch) {
    Tier to = hops[hop].second;
    switch (to) {
      case Tier::kSsd: {
        auto buf = scratch->first(c.len);
        object_store_->Get(ObjectKey(model_id, PartitionPath(ssd_dir, c.device_id)), c.offset, buf);
        ssd_writers.at(c.device_id).WriteAt(buf, c.offset);
        break;
      }
      case Tier::kDramPool:
        ssd_readers.at(c.device_id).ReadAt(pool_->Chunk(pool_ids[c.seq]).first(c.len), c.offset);
        break;
      case Tier::kDevice:
        DeviceMemory::CopyIn(regions.at(c.device_id), c.offset,
                             pool_->Chunk(pool_ids[c.seq]).first(c.len), /*pinned_source=*/true);
        break;
      case Tier::kObjectStore:
        break;
    }
  };

  auto worker = [&](size_t hop) {
    std::unique_ptr<AlignedBuffer> scratch;
    if (hops[hop].second == Tier::kSsd) scratch = std::make_unique<AlignedBuffer>(config_.chunk_size);
    while (auto idx = queues[hop].Pop()) {
      if (failed.load()) continue;
      const ChunkRef& c = chunks[*idx];
      if (stage[*idx].load(std::memory_order_acquire) != static_cast<int>(hop)) ++violations;
      int64_t t0 = now_ns();
      int64_t expected = 0;
      hop_first[hop].compare_exchange_strong(expected, t0 == 0 ? 1 : t0);
      try {
        transfer(hop, c, scratch.get());
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) {
          error = std::current_exception();
          error_hop = HopName(hops[hop].first, hops[hop].second);
        }
        failed.store(true);
        for (auto& q : queues) q.Close();
        continue;
      }
      stage[*idx].store(static_cast<int>(hop) + 1, std::memory_order_release);
      int64_t t1 = now_ns();
      int64_t prev = hop_last[hop].load();
      while (t1 > prev && !hop_last[hop].compare_exchange_weak(prev, t1)) {
      }
      if (hop + 1 < n_hops) queues[hop + 1].Push(*idx);
    }
    if (workers_left[hop].fetch_sub(1) == 1 && hop + 1 < n_hops) queues[hop + 1].Close();
  };

  if (!chunks.empty()) {
    for (size_t h = 0; h < n_hops; ++h) {
      workers_left[h].store(config_.WorkersFor(hops[h].second));
      hop_first[h].store(0);
      hop_last[h].store(0);
    }
    for (const ChunkRef& c : chunks) queues[0].Push(c.seq);
    queues[0].Close();
    std::vector<std::jthread> threads;
    for (size_t h = 0; h < n_hops; ++h) {
      for (int w = 0; w < config_.WorkersFor(hops[h].second); ++w) threads.emplace_back(worker, h);
    }
  }

  if (error) {
    if (fills_pool) pool_->Free(model_id);
    if (uses_pool) pool_->Unpin(model_id);
    if (dest == Tier::kDevice) device_->Release(model_id);
    try {
      std::rethrow_exception(error);
    } catch (const std::exception& e) {
      throw TierIoError(error_hop, e.what());
    }
  }

  if (src == Tier::kObjectStore) {
    // Publish the index last so a partially downloaded model never looks
    // resident on SSD.
    WriteIndex(layout, IndexPath(ssd_dir));
  }
  if (uses_pool) {
    {
      std::lock_guard<std::mutex> lock(mu_);
      pool_layouts_[model_id] = layout;
    }
    pool_->Unpin(model_id);
  }

  report.wall_time_ns = now_ns();
  report.pipeline_violations = violations.load();
  for (size_t h = 0; h < n_hops && !chunks.empty(); ++h) {
    report.per_tier_time_ns[HopName(hops[h].first, hops[h].second)] =
        hop_last[h].load() - hop_first[h].load();
  }
  return report;
}

}  // namespace llmctl::ckpt
