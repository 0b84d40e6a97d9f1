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

#include <cstddef>
#include <cstdint>
#include <functional>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace llmctl::ckpt {

using ChunkId = uint32_t;

// Fixed-size, aligned host memory chunks shared by all models on a server.
//
// Chunks are handed out per model and reclaimed only through Allocate
// (LRU eviction of whole models) or Free. A model pinned by an in-flight
// load is never chosen as an eviction victim. All operations are atomic
// with respect to each other.
class ChunkPool {
 public:
  static constexpr size_t kAlignment = 4096;
  static constexpr size_t kHugePage = 2 << 20;

  ChunkPool(uint64_t chunk_size, uint32_t capacity);
  ~ChunkPool();

  ChunkPool(const ChunkPool&) = delete;
  ChunkPool& operator=(const ChunkPool&) = delete;

  // Grants `n` more chunks to `model_id`, evicting least-recently-used
  // unpinned models when needed. Throws CapacityError (without evicting
  // anything) if the request cannot be satisfied.
  std::vector<ChunkId> Allocate(const std::string& model_id, uint32_t n);

  // Returns all chunks of `model_id` to the free list; 0 if unknown.
  size_t Free(const std::string& model_id);

  void Touch(const std::string& model_id);
  void Pin(const std::string& model_id);
  void Unpin(const std::string& model_id);

  std::span<std::byte> Chunk(ChunkId id);
  std::span<const std::byte> Chunk(ChunkId id) const;

  std::vector<ChunkId> ChunksOf(const std::string& model_id) const;
  bool IsResident(const std::string& model_id) const;
  // Oldest first.
  std::vector<std::string> LruOrder() const;

  uint32_t capacity() const { return capacity_; }
  uint64_t chunk_size() const { return chunk_size_; }
  uint32_t free_chunks() const;
  uint32_t allocated_chunks() const;

  // Called (under the pool lock) for every model evicted by Allocate.
  void set_eviction_listener(std::function<void(const std::string&)> fn);

 private:
  void TouchLocked(const std::string& model_id);

  const uint64_t chunk_size_;
  const uint32_t capacity_;
  std::byte* memory_ = nullptr;
  bool locked_ = false;

  mutable std::mutex mu_;
  std::set<ChunkId> free_;
  std::map<std::string, std::vector<ChunkId>> resident_;
  std::list<std::string> lru_;
  std::map<std::string, int> pins_;
  std::function<void(const std::string&)> on_evict_;
};

}  // namespace llmctl::ckpt
