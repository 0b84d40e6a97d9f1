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

#include <cstdint>
#include <random>
#include <string>

#include "llmctl/ckpt/format.h"

namespace llmctl::ckpt {

struct SyntheticSpec {
  std::string model_id = "synthetic";
  uint32_t num_devices = 1;
  uint32_t num_tensors = 16;
  // Byte budget for the whole checkpoint; tensor sizes are scaled to fit.
  uint64_t total_bytes = 1 << 20;
  // Fraction of tensors drawn below 1 MiB; the rest share the remaining bytes.
  double small_fraction = 1.0 / 3.0;
  uint64_t seed = 1;
};

// Deterministic checkpoint with mixed tensor sizes, round-robin devices and
// pseudo-random payloads.
SourceCheckpoint MakeSyntheticCheckpoint(const SyntheticSpec& spec);

// Fully random checkpoint for property tests: random dtypes, shapes and
// device ids (in [0, max_devices)), total payload <= max_total_bytes.
SourceCheckpoint MakeRandomCheckpoint(std::mt19937_64& rng, uint32_t max_devices,
                                      uint32_t max_tensors, uint64_t max_total_bytes,
                                      const std::string& model_id);

void FillPseudoRandom(std::span<std::byte> out, uint64_t seed);

}  // namespace llmctl::ckpt
