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

#include "llmctl/ckpt/format.h"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <set>

#include "llmctl/common/error.h"

namespace llmctl::ckpt {

namespace fs = std::filesystem;

namespace {

constexpr std::array<char, 8> kIndexMagic = {'L', 'L', 'M', 'C', 'K', 'I', 'D', 'X'};
constexpr uint64_t kMaxDtypeWidth = 8;

class ByteWriter {
 public:
  void U8(uint8_t v) { out_.push_back(static_cast<std::byte>(v)); }
  void U32(uint32_t v) { Le(v, 4); }
  void U64(uint64_t v) { Le(v, 8); }
  void Str(const std::string& s) {
    U32(static_cast<uint32_t>(s.size()));
    for (char c : s) out_.push_back(static_cast<std::byte>(c));
  }
  void Raw(std::span<const char> bytes) {
    for (char c : bytes) out_.push_back(static_cast<std::byte>(c));
  }
  std::vector<std::byte> Take() { return std::move(out_); }

 private:
  void Le(uint64_t v, int width) {
    for (int i = 0; i < width; ++i) {
      out_.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
    }
  }
  std::vector<std::byte> out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::byte> in) : in_(in) {}

  uint8_t U8() { return static_cast<uint8_t>(Le(1)); }
  uint32_t U32() { return static_cast<uint32_t>(Le(4)); }
  uint64_t U64() { return Le(8); }
  std::string Str() {
    uint32_t len = U32();
    Need(len);
    std::string s(len, '\0');
    std::memcpy(s.data(), in_.data() + pos_, len);
    pos_ += len;
    return s;
  }
  void Expect(std::span<const char> magic) {
    Need(magic.size());
    if (std::memcmp(in_.data() + pos_, magic.data(), magic.size()) != 0) {
      throw FormatError("bad index magic");
    }
    pos_ += magic.size();
  }
  size_t remaining() const { return in_.size() - pos_; }

 private:
  void Need(size_t n) const {
    if (in_.size() - pos_ < n) throw FormatError("truncated index file");
  }
  uint64_t Le(int width) {
    Need(width);
    uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<uint64_t>(in_[pos_ + i]) << (8 * i);
    }
    pos_ += width;
    return v;
  }

  std::span<const std::byte> in_;
  size_t pos_ = 0;
};

}  // namespace

size_t DTypeWidth(DType dtype) {
  switch (dtype) {
    case DType::kF16:
      return 2;
    case DType::kF32:
      return 4;
    case DType::kI8:
      return 1;
    case DType::kI64:
      return 8;
  }
  throw FormatError("unknown dtype");
}

const char* DTypeName(DType dtype) {
  switch (dtype) {
    case DType::kF16:
      return "F16";
    case DType::kF32:
      return "F32";
    case DType::kI8:
      return "I8";
    case DType::kI64:
      return "I64";
  }
  return "?";
}

DType ParseDType(const std::string& name) {
  if (name == "F16") return DType::kF16;
  if (name == "F32") return DType::kF32;
  if (name == "I8") return DType::kI8;
  if (name == "I64") return DType::kI64;
  throw ConversionError("unknown dtype '" + name + "'");
}

uint64_t TensorBytes(DType dtype, std::span<const uint64_t> shape) {
  uint64_t n = DTypeWidth(dtype);
  for (uint64_t d : shape) n *= d;
  return n;
}

uint64_t PartitionLayout::TotalBytes() const {
  uint64_t total = 0;
  for (const auto& [device, len] : partitions) total += len;
  return total;
}

const TensorIndexEntry* PartitionLayout::Find(const std::string& name) const {
  auto it = std::find_if(index.begin(), index.end(),
                         [&](const TensorIndexEntry& e) { return e.name == name; });
  return it == index.end() ? nullptr : &*it;
}

PartitionLayout PlanLayout(const SourceCheckpoint& src, uint64_t align) {
  if (!IsPowerOfTwo(align) || align < kMaxDtypeWidth) {
    throw ConversionError("alignment must be a power of two >= " +
                          std::to_string(kMaxDtypeWidth));
  }
  PartitionLayout layout;
  layout.model_id = src.model_id;
  layout.alignment = align;

  std::set<std::string> names;
  std::map<uint32_t, uint64_t> cursor;
  for (const SourceTensor& t : src.tensors) {
    if (!names.insert(t.name).second) {
      throw ConversionError("duplicate tensor name '" + t.name + "'");
    }
    for (uint64_t d : t.shape) {
      if (d == 0) throw ConversionError("tensor '" + t.name + "' has a zero dimension");
    }
    uint64_t size = TensorBytes(t.dtype, t.shape);
    if (size != t.payload.size()) {
      throw ConversionError("tensor '" + t.name + "' payload is " +
                            std::to_string(t.payload.size()) + " bytes, shape implies " +
                            std::to_string(size));
    }
    uint64_t& next = cursor[t.device_id];
    TensorIndexEntry entry{t.name, t.device_id, next, size, t.dtype, t.shape};
    next = AlignUp(next + size, align);
    layout.index.push_back(std::move(entry));
  }
  layout.partitions = std::move(cursor);
  return layout;
}

fs::path ModelDir(const fs::path& root, const std::string& model_id) {
  return root / model_id;
}

fs::path PartitionPath(const fs::path& model_dir, uint32_t device_id) {
  return model_dir / ("part_" + std::to_string(device_id) + ".bin");
}

fs::path IndexPath(const fs::path& model_dir) { return model_dir / "index.bin"; }

fs::path ExecutionBlobPath(const fs::path& model_dir) {
  return model_dir / "exec.blob";
}

PartitionLayout Convert(const SourceCheckpoint& src, const fs::path& out_root,
                        uint64_t align) {
  PartitionLayout layout = PlanLayout(src, align);
  fs::path dir = ModelDir(out_root, src.model_id);
  fs::create_directories(dir);

  std::map<uint32_t, std::ofstream> files;
  for (const auto& [device, len] : layout.partitions) {
    std::ofstream out(PartitionPath(dir, device), std::ios::binary | std::ios::trunc);
    if (!out) throw ConversionError("cannot create partition for device " + std::to_string(device));
    files.emplace(device, std::move(out));
  }
  for (size_t i = 0; i < src.tensors.size(); ++i) {
    const TensorIndexEntry& e = layout.index[i];
    std::ofstream& out = files.at(e.device_id);
    out.seekp(static_cast<std::streamoff>(e.offset));
    out.write(reinterpret_cast<const char*>(src.tensors[i].payload.data()),
              static_cast<std::streamsize>(e.size));
  }
  for (auto& [device, out] : files) {
    out.close();
    // Pad to the aligned partition length so every chunk can be read with
    // unbuffered I/O.
    fs::resize_file(PartitionPath(dir, device), layout.partitions.at(device));
  }
  if (!src.execution_blob.empty()) {
    std::ofstream blob(ExecutionBlobPath(dir), std::ios::binary | std::ios::trunc);
    blob.write(reinterpret_cast<const char*>(src.execution_blob.data()),
               static_cast<std::streamsize>(src.execution_blob.size()));
  }
  WriteIndex(layout, IndexPath(dir));
  return layout;
}

std::vector<std::byte> SerializeIndex(const PartitionLayout& layout) {
  ByteWriter w;
  w.Raw(kIndexMagic);
  w.U32(layout.format_version);
  w.U64(layout.alignment);
  w.Str(layout.model_id);
  w.U32(static_cast<uint32_t>(layout.partitions.size()));
  for (const auto& [device, len] : layout.partitions) {
    w.U32(device);
    w.U64(len);
  }
  w.U64(layout.index.size());
  for (const TensorIndexEntry& e : layout.index) {
    w.Str(e.name);
    w.U32(e.device_id);
    w.U64(e.offset);
    w.U64(e.size);
    w.U8(static_cast<uint8_t>(e.dtype));
    w.U32(static_cast<uint32_t>(e.shape.size()));
    for (uint64_t d : e.shape) w.U64(d);
  }
  return w.Take();
}

PartitionLayout ParseIndex(std::span<const std::byte> bytes) {
  ByteReader r(bytes);
  r.Expect(kIndexMagic);
  PartitionLayout layout;
  layout.format_version = r.U32();
  if (layout.format_version != kFormatVersion) {
    throw FormatError("unsupported index format version " +
                      std::to_string(layout.format_version));
  }
  layout.alignment = r.U64();
  layout.model_id = r.Str();
  uint32_t n_parts = r.U32();
  for (uint32_t i = 0; i < n_parts; ++i) {
    uint32_t device = r.U32();
    uint64_t len = r.U64();
    if (!layout.partitions.emplace(device, len).second) {
      throw FormatError("duplicate partition for device " + std::to_string(device));
    }
  }
  uint64_t n_entries = r.U64();
  // Each entry takes at least 29 bytes; reject absurd counts before reserving.
  if (n_entries > r.remaining() / 29) throw FormatError("truncated index file");
  layout.index.reserve(n_entries);
  for (uint64_t i = 0; i < n_entries; ++i) {
    TensorIndexEntry e;
    e.name = r.Str();
    e.device_id = r.U32();
    e.offset = r.U64();
    e.size = r.U64();
    uint8_t dtype = r.U8();
    if (dtype > static_cast<uint8_t>(DType::kI64)) {
      throw FormatError("invalid dtype tag " + std::to_string(dtype));
    }
    e.dtype = static_cast<DType>(dtype);
    uint32_t ndim = r.U32();
    if (ndim > r.remaining() / 8) throw FormatError("truncated index file");
    e.shape.resize(ndim);
    for (uint64_t& d : e.shape) d = r.U64();
    layout.index.push_back(std::move(e));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after index");
  ValidateLayout(layout);
  return layout;
}

void ValidateLayout(const PartitionLayout& layout) {
  if (!IsPowerOfTwo(layout.alignment) || layout.alignment < kMaxDtypeWidth) {
    throw FormatError("invalid alignment " + std::to_string(layout.alignment));
  }
  std::set<std::string> names;
  std::map<uint32_t, std::vector<std::pair<uint64_t, uint64_t>>> ranges;
  for (const TensorIndexEntry& e : layout.index) {
    if (!names.insert(e.name).second) {
      throw FormatError("duplicate tensor '" + e.name + "'");
    }
    if (e.offset % layout.alignment != 0) {
      throw FormatError("tensor '" + e.name + "' offset is not aligned");
    }
    if (e.size != TensorBytes(e.dtype, e.shape)) {
      throw FormatError("tensor '" + e.name + "' size does not match shape");
    }
    auto part = layout.partitions.find(e.device_id);
    if (part == layout.partitions.end()) {
      throw FormatError("tensor '" + e.name + "' refers to a missing partition");
    }
    if (e.offset > part->second || e.size > part->second - e.offset) {
      throw FormatError("tensor '" + e.name + "' exceeds its partition");
    }
    ranges[e.device_id].emplace_back(e.offset, e.offset + e.size);
  }
  for (auto& [device, list] : ranges) {
    std::sort(list.begin(), list.end());
    for (size_t i = 1; i < list.size(); ++i) {
      if (list[i].first < list[i - 1].second) {
        throw FormatError("overlapping tensors in partition " + std::to_string(device));
      }
    }
  }
  for (const auto& [device, len] : layout.partitions) {
    if (len % layout.alignment != 0) {
      throw FormatError("partition " + std::to_string(device) + " length is not aligned");
    }
  }
}

void WriteIndex(const PartitionLayout& layout, const fs::path& path) {
  std::vector<std::byte> bytes = SerializeIndex(layout);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("failed writing " + path.string());
}

PartitionLayout ReadIndex(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
  return ParseIndex(std::as_bytes(std::span<const char>(raw)));
}

TensorAddress ResolveTensorAddress(const PartitionLayout& layout,
                                   const std::string& name,
                                   const std::map<uint32_t, uint64_t>& base_addresses) {
  const TensorIndexEntry* e = layout.Find(name);
  if (e == nullptr) throw LookupError("unknown tensor '" + name + "'");
  auto base = base_addresses.find(e->device_id);
  if (base == base_addresses.end()) {
    throw LookupError("no base address for device " + std::to_string(e->device_id));
  }
  return {e->device_id, base->second + e->offset};
}

}  // namespace llmctl::ckpt
