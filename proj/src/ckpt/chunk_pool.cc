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

#include "llmctl/ckpt/chunk_pool.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <new>

#include <sys/mman.h>

#include "llmctl/ckpt/format.h"
#include "llmctl/common/error.h"

namespace llmctl::ckpt {

ChunkPool::ChunkPool(uint64_t chunk_size, uint32_t capacity)
    : chunk_size_(chunk_size), capacity_(capacity) {
  if (chunk_size == 0 || chunk_size % kAlignment != 0) {
    throw CapacityError("chunk size must be a positive multiple of 4096");
  }
  if (capacity > 0) {
    const uint64_t bytes = chunk_size * capacity;
    memory_ = static_cast<std::byte*>(std::aligned_alloc(kHugePage, AlignUp(bytes, kHugePage)));
    if (memory_ == nullptr) throw std::bad_alloc();
    // Huge pages cut per-page pinning work on direct reads. Locking is best
    // effort since it is bounded by RLIMIT_MEMLOCK.
    madvise(memory_, AlignUp(bytes, kHugePage), MADV_HUGEPAGE);
    std::memset(memory_, 0, bytes);
    locked_ = mlock(memory_, bytes) == 0;
  }
  for (ChunkId id = 0; id < capacity; ++id) free_.insert(id);
}

ChunkPool::~ChunkPool() {
  if (locked_) munlock(memory_, chunk_size_ * capacity_);
  std::free(memory_);
}

std::vector<ChunkId> ChunkPool::Allocate(const std::string& model_id, uint32_t n) {
  std::lock_guard<std::mutex> lock(mu_);
  if (n == 0) return {};
  auto held_it = resident_.find(model_id);
  uint64_t held = held_it == resident_.end() ? 0 : held_it->second.size();
  if (n > capacity_ || held + n > capacity_) {
    throw CapacityError("model '" + model_id + "' needs " + std::to_string(held + n) +
                        " chunks, pool capacity is " + std::to_string(capacity_));
  }

  // Plan evictions first so a failed request leaves the pool untouched.
  std::vector<std::string> victims;
  uint64_t available = free_.size();
  for (const std::string& m : lru_) {
    if (available >= n) break;
    if (m == model_id || pins_.count(m) != 0) continue;
    victims.push_back(m);
    available += resident_.at(m).size();
  }
  if (available < n) {
    throw CapacityError("pool cannot free " + std::to_string(n) + " chunks for '" +
                        model_id + "': remaining models are pinned");
  }
  for (const std::string& m : victims) {
    for (ChunkId id : resident_.at(m)) free_.insert(id);
    resident_.erase(m);
    lru_.remove(m);
    if (on_evict_) on_evict_(m);
  }

  std::vector<ChunkId> granted;
  granted.reserve(n);
  for (uint32_t i = 0; i < n; ++i) {
    granted.push_back(*free_.begin());
    free_.erase(free_.begin());
  }
  auto& mine = resident_[model_id];
  mine.insert(mine.end(), granted.begin(), granted.end());
  TouchLocked(model_id);
  return granted;
}

size_t ChunkPool::Free(const std::string& model_id) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = resident_.find(model_id);
  if (it == resident_.end()) return 0;
  size_t released = it->second.size();
  for (ChunkId id : it->second) free_.insert(id);
  resident_.erase(it);
  lru_.remove(model_id);
  return released;
}

void ChunkPool::Touch(const std::string& model_id) {
  std::lock_guard<std::mutex> lock(mu_);
  if (resident_.count(model_id) != 0) TouchLocked(model_id);
}

void ChunkPool::TouchLocked(const std::string& model_id) {
  lru_.remove(model_id);
  lru_.push_back(model_id);
}

void ChunkPool::Pin(const std::string& model_id) {
  std::lock_guard<std::mutex> lock(mu_);
  ++pins_[model_id];
}

void ChunkPool::Unpin(const std::string& model_id) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = pins_.find(model_id);
  if (it != pins_.end() && --it->second == 0) pins_.erase(it);
}

std::span<std::byte> ChunkPool::Chunk(ChunkId id) {
  return {memory_ + static_cast<uint64_t>(id) * chunk_size_, chunk_size_};
}

std::span<const std::byte> ChunkPool::Chunk(ChunkId id) const {
  return {memory_ + static_cast<uint64_t>(id) * chunk_size_, chunk_size_};
}

std::vector<ChunkId> ChunkPool::ChunksOf(const std::string& model_id) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = resident_.find(model_id);
  return it == resident_.end() ? std::vector<ChunkId>{} : it->second;
}

bool ChunkPool::IsResident(const std::string& model_id) const {
  std::lock_guard<std::mutex> lock(mu_);
  return resident_.count(model_id) != 0;
}

std::vector<std::string> ChunkPool::LruOrder() const {
  std::lock_guard<std::mutex> lock(mu_);
  return {lru_.begin(), lru_.end()};
}

uint32_t ChunkPool::free_chunks() const {
  std::lock_guard<std::mutex> lock(mu_);
  return static_cast<uint32_t>(free_.size());
}

uint32_t ChunkPool::allocated_chunks() const {
  std::lock_guard<std::mutex> lock(mu_);
  uint32_t n = 0;
  for (const auto& [m, ids] : resident_) n += static_cast<uint32_t>(ids.size());
  return n;
}

void ChunkPool::set_eviction_listener(std::function<void(const std::string&)> fn) {
  std::lock_guard<std::mutex> lock(mu_);
  on_evict_ = std::move(fn);
}

}  // namespace llmctl::ckpt
