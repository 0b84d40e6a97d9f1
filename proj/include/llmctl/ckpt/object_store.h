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

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <span>
#include <string>

namespace llmctl::ckpt {

// Shared-link rate limiter. Callers may go into debt; each caller sleeps
// until its own bytes are paid for, so concurrent readers split the rate.
class TokenBucket {
 public:
  // bytes_per_s <= 0 disables throttling.
  TokenBucket(double bytes_per_s, double burst_bytes);
  void Acquire(uint64_t bytes);
  double rate() const { return rate_; }

 private:
  using Clock = std::chrono::steady_clock;
  const double rate_;
  const double burst_;
  std::mutex mu_;
  double tokens_;
  Clock::time_point last_;
};

// Remote object store stand-in: objects are files under `root`, keyed by
// "<model_id>/<name>", read through a bandwidth-throttled link.
class ObjectStore {
 public:
  ObjectStore(std::filesystem::path root, double bytes_per_s);

  uint64_t Size(const std::string& key) const;
  bool Contains(const std::string& key) const;
  void Get(const std::string& key, uint64_t offset, std::span<std::byte> dst);
  std::filesystem::path PathOf(const std::string& key) const { return root_ / key; }
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
  TokenBucket link_;
};

}  // namespace llmctl::ckpt
