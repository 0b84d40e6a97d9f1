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

#include <filesystem>

#include "llmctl/ckpt/format.h"

namespace llmctl::ckpt {

// Source (pre-conversion) checkpoint directory:
//
//   <dir>/manifest.json   {"model_id": ..., "tensors": [{"name", "device_id",
//                          "dtype", "shape", "offset"}], "execution_blob": ...}
//   <dir>/tensors.bin     payloads packed back to back, in manifest order
//   <dir>/exec.blob       optional opaque execution files
//
// This mirrors a training-style checkpoint: tensors are tightly packed with
// no alignment, so they cannot be addressed directly.
SourceCheckpoint ReadSourceCheckpoint(const std::filesystem::path& dir);
void WriteSourceCheckpoint(const SourceCheckpoint& ckpt,
                           const std::filesystem::path& dir);

}  // namespace llmctl::ckpt
