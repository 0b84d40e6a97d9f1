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

#include "llmctl/ckpt/file_io.h"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <system_error>

namespace llmctl::ckpt {

File::~File() {
  if (fd_ >= 0) ::close(fd_);
}

File::File(File&& other) noexcept : fd_(other.fd_), direct_(other.direct_) {
  other.fd_ = -1;
}

File& File::operator=(File&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = other.fd_;
    direct_ = other.direct_;
    other.fd_ = -1;
  }
  return *this;
}

File File::OpenRead(const std::filesystem::path& path, bool direct) {
  File f;
  if (direct) {
    f.fd_ = ::open(path.c_str(), O_RDONLY | O_DIRECT);
    if (f.fd_ >= 0) {
      f.direct_ = true;
      return f;
    }
    if (errno != EINVAL) {
      throw std::system_error(errno, std::generic_category(), "open " + path.string());
    }
  }
  f.fd_ = ::open(path.c_str(), O_RDONLY);
  if (f.fd_ < 0) {
    throw std::system_error(errno, std::generic_category(), "open " + path.string());
  }
  return f;
}

File File::OpenWrite(const std::filesystem::path& path, uint64_t size) {
  File f;
  f.fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT, 0644);
  if (f.fd_ < 0) {
    throw std::system_error(errno, std::generic_category(), "open " + path.string());
  }
  if (::ftruncate(f.fd_, static_cast<off_t>(size)) != 0) {
    throw std::system_error(errno, std::generic_category(), "ftruncate " + path.string());
  }
  return f;
}

void File::ReadAt(std::span<std::byte> dst, uint64_t offset) const {
  size_t done = 0;
  while (done < dst.size()) {
    ssize_t n = ::pread(fd_, dst.data() + done, dst.size() - done,
                        static_cast<off_t>(offset + done));
    if (n < 0) {
      if (errno == EINTR) continue;
      throw std::system_error(errno, std::generic_category(), "pread");
    }
    if (n == 0) throw std::system_error(EIO, std::generic_category(), "short read");
    done += static_cast<size_t>(n);
  }
}

void File::WriteAt(std::span<const std::byte> src, uint64_t offset) const {
  size_t done = 0;
  while (done < src.size()) {
    ssize_t n = ::pwrite(fd_, src.data() + done, src.size() - done,
                         static_cast<off_t>(offset + done));
    if (n < 0) {
      if (errno == EINTR) continue;
      throw std::system_error(errno, std::generic_category(), "pwrite");
    }
    done += static_cast<size_t>(n);
  }
}

void DropPageCache(const std::filesystem::path& path) {
  int fd = ::open(path.c_str(), O_RDONLY);
  if (fd < 0) return;
  ::fdatasync(fd);
  ::posix_fadvise(fd, 0, 0, POSIX_FADV_DONTNEED);
  ::close(fd);
}

}  // namespace llmctl::ckpt
