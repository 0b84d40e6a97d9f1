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

#include <chrono>
#include <fstream>
#include <future>
#include <random>
#include <thread>

#include "doctest.h"
#include "llmctl/ckpt/chunk_pool.h"
#include "llmctl/ckpt/device_memory.h"
#include "llmctl/ckpt/loader.h"
#include "llmctl/ckpt/object_store.h"
#include "llmctl/ckpt/staged.h"
#include "llmctl/ckpt/synthetic.h"
#include "llmctl/common/error.h"
#include "test_util.h"

using namespace llmctl::ckpt;
using llmctl::testing::TempDir;

namespace {

constexpr uint64_t kChunk = 64 * 1024;

LoaderConfig SmallConfig() {
  LoaderConfig c;
  c.chunk_size = kChunk;
  c.workers_per_tier = {{Tier::kSsd, 2}, {Tier::kDramPool, 3}, {Tier::kDevice, 2}};
  return c;
}

std::vector<std::byte> Slurp(const std::filesystem::path& p) {
  std::vector<std::byte> out(std::filesystem::file_size(p));
  std::ifstream in(p, std::ios::binary);
  in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size()));
  return out;
}

// Device regions must equal the converted partition files byte for byte.
void CheckDevice(const DeviceMemory& device, const std::filesystem::path& root,
                 const std::string& model, const PartitionLayout& layout) {
  for (const auto& [d, len] : layout.partitions) {
    auto region = device.Region(model, d);
    REQUIRE(region.size() >= len);
    std::vector<std::byte> file = Slurp(PartitionPath(ModelDir(root, model), d));
    CHECK(std::equal(file.begin(), file.end(), region.begin()));
  }
}

// Pool chunks of a model, concatenated in chunk order, must equal the files.
void CheckPool(const ChunkPool& pool, const std::filesystem::path& root, const std::string& model,
               const PartitionLayout& layout) {
  std::vector<ChunkRef> chunks = PlanChunks(layout, pool.chunk_size());
  std::vector<ChunkId> ids = pool.ChunksOf(model);
  REQUIRE(ids.size() == chunks.size());
  std::map<uint32_t, std::vector<std::byte>> files;
  for (const auto& [d, len] : layout.partitions) {
    files[d] = Slurp(PartitionPath(ModelDir(root, model), d));
  }
  for (size_t i = 0; i < chunks.size(); ++i) {
    const ChunkRef& c = chunks[i];
    auto chunk = pool.Chunk(ids[i]);
    const auto& f = files.at(c.device_id);
    CHECK(std::equal(f.begin() + static_cast<ptrdiff_t>(c.offset),
                     f.begin() + static_cast<ptrdiff_t>(c.offset + c.len), chunk.begin()));
  }
}

uint32_t PoolFor(const PartitionLayout& layout) {
  return static_cast<uint32_t>(PlanChunks(layout, kChunk).size());
}

PartitionLayout ConvertSynthetic(const std::filesystem::path& root, const std::string& id,
                                 uint64_t bytes, uint32_t tensors, uint32_t devices) {
  SyntheticSpec s;
  s.model_id = id;
  s.total_bytes = bytes;
  s.num_tensors = tensors;
  s.num_devices = devices;
  return Convert(MakeSyntheticCheckpoint(s), root);
}

}  // namespace

TEST_CASE("chunk pool evicts whole models in LRU order") {
  ChunkPool pool(4096, 8);
  CHECK(pool.Allocate("A", 5).size() == 5);
  CHECK(pool.Allocate("B", 5).size() == 5);
  CHECK_FALSE(pool.IsResident("A"));
  CHECK(pool.ChunksOf("B").size() == 5);
  CHECK(pool.free_chunks() == 3);
}

TEST_CASE("chunk pool edge cases") {
  ChunkPool pool(4096, 4);
  CHECK(pool.Allocate("A", 0).empty());
  CHECK(pool.free_chunks() == 4);
  CHECK(pool.Free("nobody") == 0);

  pool.Allocate("A", 2);
  CHECK_THROWS_AS(pool.Allocate("B", 5), llmctl::CapacityError);
  CHECK(pool.IsResident("A"));  // nothing evicted by the failed request

  pool.Pin("A");
  CHECK_THROWS_AS(pool.Allocate("B", 3), llmctl::CapacityError);
  pool.Unpin("A");
  CHECK(pool.Allocate("B", 3).size() == 3);
  CHECK_FALSE(pool.IsResident("A"));

  pool.Allocate("C", 1);
  pool.Touch("B");
  CHECK(pool.LruOrder() == std::vector<std::string>{"C", "B"});
  CHECK(pool.Free("B") == 3);
}

TEST_CASE("chunk pool conservation under random operations") {
  std::mt19937_64 rng(42);
  ChunkPool pool(4096, 32);
  const std::vector<std::string> models = {"a", "b", "c", "d", "e"};
  for (int step = 0; step < 5000; ++step) {
    const std::string& m = models[rng() % models.size()];
    switch (rng() % 5) {
      case 0:
      case 1:
        try {
          pool.Allocate(m, static_cast<uint32_t>(rng() % 12));
        } catch (const llmctl::CapacityError&) {
        }
        break;
      case 2: pool.Free(m); break;
      case 3: pool.Touch(m); break;
      case 4:
        if (rng() % 2) pool.Pin(m); else pool.Unpin(m);
        break;
    }
    REQUIRE(pool.allocated_chunks() + pool.free_chunks() == pool.capacity());
    std::set<ChunkId> owned;
    size_t total = 0;
    for (const auto& mm : models) {
      for (ChunkId id : pool.ChunksOf(mm)) owned.insert(id), ++total;
    }
    REQUIRE(owned.size() == total);
    REQUIRE(total == pool.allocated_chunks());
  }
}

TEST_CASE("chunk plan splits partitions at chunk boundaries") {
  PartitionLayout l;
  l.partitions = {{0, 3 * kChunk + 4096}, {1, kChunk}};
  std::vector<ChunkRef> chunks = PlanChunks(l, kChunk);
  REQUIRE(chunks.size() == 5);
  CHECK(chunks[3].len == 4096);
  CHECK(chunks[3].offset == 3 * kChunk);
  CHECK(chunks[4].device_id == 1);
  for (size_t i = 0; i < chunks.size(); ++i) CHECK(chunks[i].seq == i);
}

TEST_CASE("pipeline load lands the exact bytes in every tier") {
  TempDir dir("load");
  PartitionLayout layout = ConvertSynthetic(dir.path(), "m", 3 << 20, 40, 2);
  ChunkPool pool(kChunk, PoolFor(layout));
  DeviceMemory device;
  CheckpointLoader loader(SmallConfig(), dir.path(), &pool, &device);

  LoadReport r = loader.Load("m", Tier::kSsd, Tier::kDramPool);
  CHECK(r.bytes == layout.TotalBytes());
  CHECK(r.pipeline_violations == 0);
  CHECK(loader.IsResident("m", Tier::kDramPool));
  CheckPool(pool, dir.path(), "m", layout);

  LoadReport r2 = loader.Load("m", Tier::kDramPool, Tier::kDevice);
  CHECK(r2.bytes == layout.TotalBytes());
  CHECK(loader.IsResident("m", Tier::kDevice));
  CheckDevice(device, dir.path(), "m", layout);
  CHECK(r2.per_tier_time_ns.count("dram_pool->device") == 1);
}

TEST_CASE("zero-byte model loads without chunks") {
  TempDir dir("load");
  SourceCheckpoint src;
  src.model_id = "empty";
  Convert(src, dir.path());
  ChunkPool pool(kChunk, 4);
  DeviceMemory device;
  CheckpointLoader loader(SmallConfig(), dir.path(), &pool, &device);
  LoadReport r = loader.Load("empty", Tier::kSsd, Tier::kDevice);
  CHECK(r.bytes == 0);
  CHECK(r.chunks == 0);
  CHECK(pool.free_chunks() == 4);
}

TEST_CASE("second load beyond pool capacity evicts the first model") {
  TempDir dir("load");
  PartitionLayout a = ConvertSynthetic(dir.path(), "a", 1 << 20, 8, 1);
  PartitionLayout b = ConvertSynthetic(dir.path(), "b", 1 << 20, 8, 1);
  const uint32_t need = static_cast<uint32_t>(PlanChunks(a, kChunk).size());
  ChunkPool pool(kChunk, need + need / 2);
  DeviceMemory device;
  CheckpointLoader loader(SmallConfig(), dir.path(), &pool, &device);
  loader.Load("a", Tier::kSsd, Tier::kDramPool);
  loader.Load("b", Tier::kSsd, Tier::kDramPool);
  CHECK_FALSE(loader.IsResident("a", Tier::kDramPool));
  CHECK(loader.IsResident("b", Tier::kDramPool));
  CheckPool(pool, dir.path(), "b", b);
  CHECK_THROWS_AS(loader.Load("a", Tier::kDramPool, Tier::kDevice), llmctl::LookupError);
}

TEST_CASE("a model larger than the pool is a capacity error") {
  TempDir dir("load");
  ConvertSynthetic(dir.path(), "big", 2 << 20, 8, 1);
  ChunkPool pool(kChunk, 4);
  DeviceMemory device;
  CheckpointLoader loader(SmallConfig(), dir.path(), &pool, &device);
  CHECK_THROWS_AS(loader.Load("big", Tier::kSsd, Tier::kDramPool), llmctl::CapacityError);
  CHECK(pool.free_chunks() == 4);
}

TEST_CASE("object store to device through every tier") {
  TempDir store("store");
  TempDir ssd("ssd");
  PartitionLayout layout = ConvertSynthetic(store.path(), "remote", 1 << 20, 12, 2);
  ObjectStore objects(store.path(), 0);
  ChunkPool pool(kChunk, PoolFor(layout));
  DeviceMemory device;
  CheckpointLoader loader(SmallConfig(), ssd.path(), &pool, &device, &objects);
  CHECK_FALSE(loader.IsResident("remote", Tier::kSsd));
  LoadReport r = loader.Load("remote", Tier::kObjectStore, Tier::kDevice);
  CHECK(r.bytes == layout.TotalBytes());
  CHECK(r.pipeline_violations == 0);
  CHECK(r.per_tier_time_ns.size() == 3);
  CHECK(loader.IsResident("remote", Tier::kSsd));
  CheckDevice(device, store.path(), "remote", layout);
  for (const auto& [d, len] : layout.partitions) {
    CHECK(Slurp(PartitionPath(ModelDir(ssd.path(), "remote"), d)) ==
          Slurp(PartitionPath(ModelDir(store.path(), "remote"), d)));
  }
}

TEST_CASE("token bucket throttles to its rate") {
  TokenBucket bucket(4e6, 1e5);
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < 10; ++i) bucket.Acquire(100000);
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  // 1 MB at 4 MB/s less the initial burst.
  CHECK(s >= 0.2);
  CHECK(s < 2.0);
}

TEST_CASE("concurrent loads of the same model are rejected") {
  TempDir store("store");
  TempDir ssd("ssd");
  ConvertSynthetic(store.path(), "slow", 1 << 20, 4, 1);
  ObjectStore objects(store.path(), 8e6);  // about half a second
  ChunkPool pool(kChunk, 64);
  DeviceMemory device;
  CheckpointLoader loader(SmallConfig(), ssd.path(), &pool, &device, &objects);
  auto first = std::async(std::launch::async,
                          [&] { return loader.Load("slow", Tier::kObjectStore, Tier::kSsd); });
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  CHECK_THROWS_AS(loader.Load("slow", Tier::kObjectStore, Tier::kSsd), std::logic_error);
  CHECK(first.get().bytes > 0);
}

TEST_CASE("all staged loaders produce identical device bytes") {
  TempDir dir("stage");
  PartitionLayout layout = ConvertSynthetic(dir.path(), "s", 2 << 20, 30, 2);
  ChunkPool pool(kChunk, PoolFor(layout));
  DeviceMemory device;
  CheckpointLoader loader(SmallConfig(), dir.path(), &pool, &device);
  REQUIRE(StagedLoaders().size() == 6);
  for (Stage stage : StagedLoaders()) {
    CAPTURE(StageName(stage));
    LoadReport r = RunStage(stage, "s", loader, pool, device);
    CHECK(r.bytes == layout.TotalBytes());
    CHECK(r.pipeline_violations == 0);
    CheckDevice(device, dir.path(), "s", layout);
    device.Release("s");
  }
}

TEST_CASE("single tensor model: baseline and pipeline agree") {
  TempDir dir("stage");
  SourceCheckpoint src;
  src.model_id = "one";
  SourceTensor t;
  t.name = "w";
  t.dtype = DType::kF32;
  t.shape = {1000};
  t.payload.resize(4000);
  FillPseudoRandom(t.payload, 3);
  src.tensors.push_back(t);
  PartitionLayout layout = Convert(src, dir.path());
  ChunkPool pool(kChunk, 4);
  DeviceMemory device;
  CheckpointLoader loader(SmallConfig(), dir.path(), &pool, &device);
  LoadReport base = RunStage(Stage::kReadByTensor, "one", loader, pool, device);
  auto region = device.Region("one", 0);
  CHECK(std::equal(t.payload.begin(), t.payload.end(), region.begin()));
  device.Release("one");
  LoadReport pipe = RunStage(Stage::kPipeline, "one", loader, pool, device);
  CHECK(base.bytes == pipe.bytes);
  CheckDevice(device, dir.path(), "one", layout);
}

TEST_CASE("stage and tier names parse back") {
  for (Stage s : StagedLoaders()) CHECK(ParseStage(StageName(s)) == s);
  CHECK(ParseTier("dram") == Tier::kDramPool);
  CHECK(ParseTier(TierName(Tier::kObjectStore)) == Tier::kObjectStore);
  CHECK_THROWS(ParseStage("nope"));
}

TEST_CASE("loader config validation") {
  LoaderConfig c;
  c.chunk_size = 1000;
  CHECK_THROWS(c.Validate());
  c.chunk_size = kChunk;
  c.workers_per_tier[Tier::kSsd] = 0;
  CHECK_THROWS(c.Validate());
}
