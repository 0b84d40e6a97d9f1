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
#include <span>

namespace llmctl::ckpt {

// Owning file descriptor. Open(direct=true) tries O_DIRECT first and falls
// back to buffered reads when the filesystem refuses it; direct() reports
// which mode is in effect.
class File {
 public:
  File() = default;
  ~File();
  File(File&& other) noexcept;
  File& operator=(File&& other) noexcept;
  File(const File&) = delete;
  File& operator=(const File&) = delete;

  static File OpenRead(const std::filesystem::path& path, bool direct);
  static File OpenWrite(const std::filesystem::path& path, uint64_t size);

  // Reads exactly dst.size() bytes at `offset` or throws std::system_error.
  void ReadAt(std::span<std::byte> dst, uint64_t offset) const;
  void WriteAt(std::span<const std::byte> src, uint64_t offset) const;

  bool direct() const { return direct_; }
  int fd() const { return fd_; }

 private:
  int fd_ = -1;
  bool direct_ = false;
};

// Asks the kernel to drop cached pages of `path` so the next buffered read
// comes from the device.
void DropPageCache(const std::filesystem::path& path);

}  // namespace llmctl::ckpt
