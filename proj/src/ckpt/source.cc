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

#include "llmctl/ckpt/source.h"

#include <fstream>
#include <json.hpp>

#include "llmctl/common/error.h"

namespace llmctl::ckpt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::byte> ReadAll(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConversionError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  std::vector<std::byte> bytes(static_cast<size_t>(in.tellg()));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  return bytes;
}

}  // namespace

SourceCheckpoint ReadSourceCheckpoint(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw ConversionError("missing manifest.json in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw ConversionError(std::string("bad manifest: ") + e.what());
  }

  SourceCheckpoint ckpt;
  std::vector<std::byte> data = ReadAll(dir / "tensors.bin");
  try {
    ckpt.model_id = manifest.at("model_id").get<std::string>();
    for (const json& t : manifest.at("tensors")) {
      SourceTensor tensor;
      tensor.name = t.at("name").get<std::string>();
      tensor.device_id = t.at("device_id").get<uint32_t>();
      tensor.dtype = ParseDType(t.at("dtype").get<std::string>());
      tensor.shape = t.at("shape").get<std::vector<uint64_t>>();
      uint64_t offset = t.at("offset").get<uint64_t>();
      uint64_t size = TensorBytes(tensor.dtype, tensor.shape);
      if (offset > data.size() || size > data.size() - offset) {
        throw ConversionError("tensor '" + tensor.name + "' lies outside tensors.bin");
      }
      tensor.payload.assign(data.begin() + static_cast<std::ptrdiff_t>(offset),
                            data.begin() + static_cast<std::ptrdiff_t>(offset + size));
      ckpt.tensors.push_back(std::move(tensor));
    }
  } catch (const json::exception& e) {
    throw ConversionError(std::string("bad manifest: ") + e.what());
  }
  if (fs::exists(dir / "exec.blob")) ckpt.execution_blob = ReadAll(dir / "exec.blob");
  return ckpt;
}

void WriteSourceCheckpoint(const SourceCheckpoint& ckpt, const fs::path& dir) {
  fs::create_directories(dir);
  json tensors = json::array();
  std::ofstream data(dir / "tensors.bin", std::ios::binary | std::ios::trunc);
  uint64_t offset = 0;
  for (const SourceTensor& t : ckpt.tensors) {
    tensors.push_back({{"name", t.name},
                       {"device_id", t.device_id},
                       {"dtype", DTypeName(t.dtype)},
                       {"shape", t.shape},
                       {"offset", offset}});
    data.write(reinterpret_cast<const char*>(t.payload.data()),
               static_cast<std::streamsize>(t.payload.size()));
    offset += t.payload.size();
  }
  std::ofstream(dir / "manifest.json") << json{{"model_id", ckpt.model_id},
                                               {"tensors", tensors}}
                                              .dump(1);
  if (!ckpt.execution_blob.empty()) {
    std::ofstream blob(dir / "exec.blob", std::ios::binary | std::ios::trunc);
    blob.write(reinterpret_cast<const char*>(ckpt.execution_blob.data()),
               static_cast<std::streamsize>(ckpt.execution_blob.size()));
  }
}

}  // namespace llmctl::ckpt
