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
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace llmctl::ckpt {

enum class DType : uint8_t { kF16 = 0, kF32 = 1, kI8 = 2, kI64 = 3 };

size_t DTypeWidth(DType dtype);
const char* DTypeName(DType dtype);
DType ParseDType(const std::string& name);

inline constexpr uint64_t kDefaultAlignment = 4096;
inline constexpr uint32_t kFormatVersion = 1;

struct SourceTensor {
  std::string name;
  uint32_t device_id = 0;
  DType dtype = DType::kF32;
  std::vector<uint64_t> shape;
  std::vector<std::byte> payload;
};

// A checkpoint as uploaded by a user: ordered tensors plus an opaque
// execution blob (model code/config) that is carried but never parsed.
struct SourceCheckpoint {
  std::string model_id;
  std::vector<SourceTensor> tensors;
  std::vector<std::byte> execution_blob;
};

struct TensorIndexEntry {
  std::string name;
  uint32_t device_id = 0;
  uint64_t offset = 0;
  uint64_t size = 0;
  DType dtype = DType::kF32;
  std::vector<uint64_t> shape;

  bool operator==(const TensorIndexEntry&) const = default;
};

struct PartitionLayout {
  std::string model_id;
  uint32_t format_version = kFormatVersion;
  uint64_t alignment = kDefaultAlignment;
  std::map<uint32_t, uint64_t> partitions;  // device_id -> byte length
  std::vector<TensorIndexEntry> index;

  bool operator==(const PartitionLayout&) const = default;

  uint64_t TotalBytes() const;
  const TensorIndexEntry* Find(const std::string& name) const;
};

// Byte count implied by a dtype and shape.
uint64_t TensorBytes(DType dtype, std::span<const uint64_t> shape);

// Computes the partition layout for `src` without touching the filesystem.
// Tensors keep source order per device; each start is padded up to `align`.
PartitionLayout PlanLayout(const SourceCheckpoint& src,
                           uint64_t align = kDefaultAlignment);

// Writes `<out_root>/<model_id>/part_<device>.bin` for every device plus
// `<out_root>/<model_id>/index.bin`. Partition files hold only raw tensor
// bytes, zero padded to the partition length.
PartitionLayout Convert(const SourceCheckpoint& src,
                        const std::filesystem::path& out_root,
                        uint64_t align = kDefaultAlignment);

std::filesystem::path ModelDir(const std::filesystem::path& root,
                               const std::string& model_id);
std::filesystem::path PartitionPath(const std::filesystem::path& model_dir,
                                    uint32_t device_id);
std::filesystem::path IndexPath(const std::filesystem::path& model_dir);
std::filesystem::path ExecutionBlobPath(const std::filesystem::path& model_dir);

std::vector<std::byte> SerializeIndex(const PartitionLayout& layout);
PartitionLayout ParseIndex(std::span<const std::byte> bytes);
void WriteIndex(const PartitionLayout& layout,
                const std::filesystem::path& path);
PartitionLayout ReadIndex(const std::filesystem::path& path);

// Throws FormatError if the layout breaks an alignment, size, disjointness
// or uniqueness invariant.
void ValidateLayout(const PartitionLayout& layout);

struct TensorAddress {
  uint32_t device_id;
  uint64_t address;

  bool operator==(const TensorAddress&) const = default;
};

// Resolves a tensor to base + offset on its device. No tensor bytes are
// touched.
TensorAddress ResolveTensorAddress(
    const PartitionLayout& layout, const std::string& name,
    const std::map<uint32_t, uint64_t>& base_addresses);

inline uint64_t AlignUp(uint64_t value, uint64_t align) {
  return (value + align - 1) / align * align;
}

inline bool IsPowerOfTwo(uint64_t v) { return v != 0 && (v & (v - 1)) == 0; }

}  // namespace llmctl::ckpt
