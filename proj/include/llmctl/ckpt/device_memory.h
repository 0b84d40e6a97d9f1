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
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>

namespace llmctl::ckpt {

// Host-memory stand-in for per-device (GPU) memory. One contiguous region per
// (model, device); the region's address is the base used for tensor
// addressing. Released regions are kept in a cache and handed out again, like
// a caching device allocator, so repeated loads do not pay for page faults.
class DeviceMemory {
 public:
  // Returns the base address of a region of at least `bytes`. Contents are
  // unspecified.
  uint64_t Allocate(const std::string& model_id, uint32_t device_id, uint64_t bytes);
  void Release(const std::string& model_id);
  // Returns cached regions to the system.
  void Trim();
  bool Has(const std::string& model_id) const;

  std::span<std::byte> Region(const std::string& model_id, uint32_t device_id);
  std::span<const std::byte> Region(const std::string& model_id, uint32_t device_id) const;
  std::map<uint32_t, uint64_t> BaseAddresses(const std::string& model_id) const;

  // Host-to-device copy into `region` at `offset`. Copies from pageable
  // memory are staged through a bounded bounce buffer, like a driver does for
  // non-page-locked sources; pool chunks stand in for pinned memory and are
  // copied directly.
  static void CopyIn(std::span<std::byte> region, uint64_t offset,
                     std::span<const std::byte> src, bool pinned_source);

 private:
  struct Buffer {
    struct Deleter {
      void operator()(std::byte* p) const;
    };
    std::unique_ptr<std::byte, Deleter> data;
    uint64_t size = 0;
    uint64_t capacity = 0;
  };

  mutable std::mutex mu_;
  std::map<std::string, std::map<uint32_t, Buffer>> regions_;
  std::multimap<uint64_t, Buffer> cache_;  // by capacity
};

}  // namespace llmctl::ckpt
