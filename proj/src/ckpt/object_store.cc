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

#include "llmctl/ckpt/object_store.h"

#include <algorithm>
#include <thread>

#include "llmctl/ckpt/file_io.h"

namespace llmctl::ckpt {

TokenBucket::TokenBucket(double bytes_per_s, double burst_bytes)
    : rate_(bytes_per_s), burst_(burst_bytes), tokens_(burst_bytes), last_(Clock::now()) {}

void TokenBucket::Acquire(uint64_t bytes) {
  if (rate_ <= 0) return;
  double wait_s = 0;
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto now = Clock::now();
    tokens_ = std::min(burst_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_);
    last_ = now;
    tokens_ -= static_cast<double>(bytes);
    if (tokens_ < 0) wait_s = -tokens_ / rate_;
  }
  if (wait_s > 0) std::this_thread::sleep_for(std::chrono::duration<double>(wait_s));
}

ObjectStore::ObjectStore(std::filesystem::path root, double bytes_per_s)
    : root_(std::move(root)), link_(bytes_per_s, bytes_per_s > 0 ? bytes_per_s / 100 : 0) {}

uint64_t ObjectStore::Size(const std::string& key) const {
  return std::filesystem::file_size(root_ / key);
}

bool ObjectStore::Contains(const std::string& key) const {
  return std::filesystem::exists(root_ / key);
}

void ObjectStore::Get(const std::string& key, uint64_t offset, std::span<std::byte> dst) {
  link_.Acquire(dst.size());
  File f = File::OpenRead(root_ / key, /*direct=*/false);
  f.ReadAt(dst, offset);
}

}  // namespace llmctl::ckpt
