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

#include "llmctl/ckpt/synthetic.h"

#include <algorithm>
#include <cstring>

namespace llmctl::ckpt {

namespace {

constexpr uint64_t kMiB = 1 << 20;

uint64_t SplitMix(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<uint64_t> ShapeFor(uint64_t elements) {
  if (elements % 128 == 0 && elements > 128) return {elements / 128, 128};
  return {elements};
}

}  // namespace

void FillPseudoRandom(std::span<std::byte> out, uint64_t seed) {
  uint64_t state = seed;
  size_t i = 0;
  for (; i + 8 <= out.size(); i += 8) {
    uint64_t v = SplitMix(state);
    std::memcpy(out.data() + i, &v, 8);
  }
  uint64_t v = SplitMix(state);
  std::memcpy(out.data() + i, &v, out.size() - i);
}

SourceCheckpoint MakeSyntheticCheckpoint(const SyntheticSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  SourceCheckpoint ckpt;
  ckpt.model_id = spec.model_id;
  const uint32_t n = spec.num_tensors;
  std::vector<bool> small(n, false);
  uint32_t n_small = static_cast<uint32_t>(spec.small_fraction * n + 0.5);
  // Spread small tensors evenly through the sequence.
  for (uint32_t k = 0; k < n_small; ++k) small[(static_cast<uint64_t>(k) * n) / n_small] = true;

  std::uniform_int_distribution<uint64_t> small_elems(2048, kMiB / 2 - 1);
  std::vector<uint64_t> elements(n, 0);
  uint64_t small_bytes = 0;
  for (uint32_t i = 0; i < n; ++i) {
    if (small[i]) {
      elements[i] = small_elems(rng);
      small_bytes += elements[i] * 2;
    }
  }
  uint32_t n_large = n - n_small;
  if (n_large > 0) {
    uint64_t budget = spec.total_bytes > small_bytes ? spec.total_bytes - small_bytes : 0;
    std::uniform_real_distribution<double> weight(0.5, 1.5);
    std::vector<double> w(n, 0.0);
    double sum = 0;
    for (uint32_t i = 0; i < n; ++i) {
      if (!small[i]) sum += (w[i] = weight(rng));
    }
    for (uint32_t i = 0; i < n; ++i) {
      if (small[i]) continue;
      uint64_t bytes = static_cast<uint64_t>(budget * (w[i] / sum));
      elements[i] = std::max<uint64_t>(kMiB / 2, bytes / 2);
    }
  }
  ckpt.tensors.reserve(n);
  for (uint32_t i = 0; i < n; ++i) {
    SourceTensor t;
    t.name = "layers." + std::to_string(i) + (small[i] ? ".norm" : ".weight");
    t.device_id = spec.num_devices == 0 ? 0 : i % spec.num_devices;
    t.dtype = DType::kF16;
    t.shape = ShapeFor(elements[i]);
    t.payload.resize(elements[i] * 2);
    FillPseudoRandom(t.payload, spec.seed * 1000003 + i);
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

SourceCheckpoint MakeRandomCheckpoint(std::mt19937_64& rng, uint32_t max_devices,
                                      uint32_t max_tensors, uint64_t max_total_bytes,
                                      const std::string& model_id) {
  SourceCheckpoint ckpt;
  ckpt.model_id = model_id;
  uint32_t n = std::uniform_int_distribution<uint32_t>(1, max_tensors)(rng);
  uint64_t cap = std::max<uint64_t>(8, max_total_bytes / n);
  std::uniform_int_distribution<int> dtype_dist(0, 3);
  std::uniform_int_distribution<uint32_t> device_dist(0, max_devices - 1);
  for (uint32_t i = 0; i < n; ++i) {
    SourceTensor t;
    t.name = "t" + std::to_string(i);
    t.device_id = device_dist(rng);
    t.dtype = static_cast<DType>(dtype_dist(rng));
    uint64_t width = DTypeWidth(t.dtype);
    uint64_t max_elems = std::max<uint64_t>(1, cap / width);
    uint64_t elems = std::uniform_int_distribution<uint64_t>(1, max_elems)(rng);
    int ndim = std::uniform_int_distribution<int>(1, 3)(rng);
    uint64_t rest = elems;
    for (int d = 0; d + 1 < ndim; ++d) {
      uint64_t dim = std::uniform_int_distribution<uint64_t>(1, 8)(rng);
      if (rest / dim == 0) dim = 1;
      t.shape.push_back(dim);
      rest /= dim;
    }
    t.shape.push_back(std::max<uint64_t>(1, rest));
    t.payload.resize(TensorBytes(t.dtype, t.shape));
    FillPseudoRandom(t.payload, rng());
    ckpt.tensors.push_back(std::move(t));
  }
  std::shuffle(ckpt.tensors.begin(), ckpt.tensors.end(), rng);
  return ckpt;
}

}  // namespace llmctl::ckpt
