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

#include "llmctl/ckpt/device_memory.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <stdexcept>

#include "llmctl/common/error.h"
#include "llmctl/ckpt/format.h"

namespace llmctl::ckpt {

void DeviceMemory::Buffer::Deleter::operator()(std::byte* p) const { std::free(p); }

uint64_t DeviceMemory::Allocate(const std::string& model_id, uint32_t device_id,
                                uint64_t bytes) {
  uint64_t rounded = AlignUp(std::max<uint64_t>(bytes, 1), 4096);
  std::lock_guard<std::mutex> lock(mu_);
  Buffer buf;
  auto hit = cache_.lower_bound(rounded);
  if (hit != cache_.end() && hit->first <= 2 * rounded) {
    buf = std::move(hit->second);
    cache_.erase(hit);
  } else {
    auto* p = static_cast<std::byte*>(std::aligned_alloc(4096, rounded));
    if (p == nullptr) throw std::bad_alloc();
    buf.data.reset(p);
    buf.capacity = rounded;
  }
  buf.size = bytes;
  Buffer& slot = regions_[model_id][device_id];
  if (slot.data) cache_.emplace(slot.capacity, std::move(slot));
  slot = std::move(buf);
  return reinterpret_cast<uint64_t>(slot.data.get());
}

void DeviceMemory::Release(const std::string& model_id) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = regions_.find(model_id);
  if (it == regions_.end()) return;
  for (auto& [device, buf] : it->second) cache_.emplace(buf.capacity, std::move(buf));
  regions_.erase(it);
}

void DeviceMemory::Trim() {
  std::lock_guard<std::mutex> lock(mu_);
  cache_.clear();
}

bool DeviceMemory::Has(const std::string& model_id) const {
  std::lock_guard<std::mutex> lock(mu_);
  return regions_.count(model_id) != 0;
}

std::span<std::byte> DeviceMemory::Region(const std::string& model_id, uint32_t device_id) {
  std::lock_guard<std::mutex> lock(mu_);
  auto m = regions_.find(model_id);
  if (m == regions_.end() || m->second.count(device_id) == 0) {
    throw LookupError("no device region for " + model_id + "/" + std::to_string(device_id));
  }
  Buffer& buf = m->second.at(device_id);
  return {buf.data.get(), buf.size};
}

std::span<const std::byte> DeviceMemory::Region(const std::string& model_id,
                                                uint32_t device_id) const {
  return const_cast<DeviceMemory*>(this)->Region(model_id, device_id);
}

std::map<uint32_t, uint64_t> DeviceMemory::BaseAddresses(const std::string& model_id) const {
  std::lock_guard<std::mutex> lock(mu_);
  std::map<uint32_t, uint64_t> bases;
  auto m = regions_.find(model_id);
  if (m == regions_.end()) return bases;
  for (const auto& [device, buf] : m->second) {
    bases[device] = reinterpret_cast<uint64_t>(buf.data.get());
  }
  return bases;
}

void DeviceMemory::CopyIn(std::span<std::byte> region, uint64_t offset,
                          std::span<const std::byte> src, bool pinned_source) {
  if (offset > region.size() || src.size() > region.size() - offset) {
    throw std::out_of_range("device copy out of bounds");
  }
  std::byte* dst = region.data() + offset;
  if (pinned_source) {
    std::memcpy(dst, src.data(), src.size());
    return;
  }
  constexpr size_t kStaging = 2 << 20;
  thread_local std::unique_ptr<std::byte[]> staging(new std::byte[kStaging]);
  for (size_t done = 0; done < src.size(); done += kStaging) {
    size_t n = std::min(kStaging, src.size() - done);
    std::memcpy(staging.get(), src.data() + done, n);
    std::memcpy(dst + done, staging.get(), n);
  }
}

}  // namespace llmctl::ckpt
