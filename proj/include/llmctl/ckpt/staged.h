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
#include <string>
#include <vector>

#include "llmctl/ckpt/loader.h"

namespace llmctl::ckpt {

// Loader variants for the SSD -> device breakdown, each adding one
// optimization over the previous one.
enum class Stage {
  kReadByTensor = 0,  // one buffered read per tensor, pageable staging
  kBulkRead,          // chunk-sized buffered reads
  kDirectIo,          // O_DIRECT reads
  kMultiThread,       // parallel chunk readers
  kPinnedPool,        // reads land in pool chunks, copied without staging
  kPipeline,          // separate worker groups per hop connected by queues
};

std::vector<Stage> StagedLoaders();
const char* StageName(Stage stage);
Stage ParseStage(const std::string& name);

// Loads `model_id` from SSD into device memory with the given stage. The
// device region of the model is replaced. Only the Pipeline stage leaves the
// model resident in the pool afterwards.
LoadReport RunStage(Stage stage, const std::string& model_id, CheckpointLoader& loader,
                    ChunkPool& pool, DeviceMemory& device);

}  // namespace llmctl::ckpt
