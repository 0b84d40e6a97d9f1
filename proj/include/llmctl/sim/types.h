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
#include <cmath>
#include <cstdint>
#include <string>

namespace llmctl::sim {

// Simulated time: integer nanoseconds since the start of a run.
using SimTime = std::chrono::nanoseconds;

using ServerId = int;
using InstanceId = uint64_t;
using SessionId = uint64_t;
using RequestId = uint64_t;
using DecisionId = uint64_t;
using MigrationId = uint64_t;

inline constexpr ServerId kNoServer = -1;

// Seconds to nanoseconds, rounded half-up.
inline SimTime FromSeconds(long double seconds) {
  return SimTime(static_cast<int64_t>(std::floor(seconds * 1e9L + 0.5L)));
}

inline double ToSeconds(SimTime t) { return static_cast<double>(t.count()) / 1e9; }

// Time to move `bytes` at `bytes_per_s`. Used by both the simulator and the
// scheduler's estimator so the two agree to the nanosecond.
inline SimTime TransferTime(uint64_t bytes, double bytes_per_s) {
  if (bytes == 0) return SimTime(0);
  return FromSeconds(static_cast<long double>(bytes) / static_cast<long double>(bytes_per_s));
}

// Token lists travel as int64 arrays.
inline constexpr uint64_t kBytesPerToken = 8;

inline uint64_t TokenPayloadBytes(uint64_t batch, uint64_t seq_len) {
  return batch * seq_len * kBytesPerToken;
}

}  // namespace llmctl::sim
