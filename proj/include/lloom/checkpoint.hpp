// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include "lloom/adam.hpp"
#include "lloom/model.hpp"
#include "lloom/trainer.hpp"

#include <cstdint>
#include <filesystem>

namespace lloom {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything needed to resume a run exactly.
///
/// File layout (little-endian):
///   8 bytes  "LLOOMCKP"
///   u32      format version
///   u64      header length H
///   H bytes  JSON header: model config, train config, epochs_completed,
///            cycle, adam {t, hyper}, manifest [{name, shape, offset}]
///   blob     float32 parameters, then Adam m, then Adam v
/// Manifest offsets are byte offsets into the blob for the parameters;
/// the m and v sections follow with the same layout.
struct Checkpoint {
    ModelConfig model;
    TrainConfig train;
    ParamStore<float> params;
    AdamState<float> adam;
    std::size_t epochs_completed = 0;
    std::uint64_t cycle = 0;
};

/// Writes to a sibling temp file and renames it into place.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);

/// Throws IoError, VersionMismatch or CorruptManifest (bad magic, bad
/// header, overlapping or out-of-range offsets, truncated blob).
auto load_checkpoint(const std::filesystem::path& path) -> Checkpoint;

} // namespace lloom
