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

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace lloom {

inline constexpr std::uint32_t kIdxImageMagic = 2051; // 00 00 08 03
inline constexpr std::uint32_t kIdxLabelMagic = 2049; // 00 00 08 01

/// A parsed IDX container (unsigned byte payload only).
struct RawIdxFile {
    std::uint32_t magic = 0;
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> payload;

    [[nodiscard]] auto count() const -> std::size_t { return dims.empty() ? 0 : dims[0]; }
};

/// Validates the header and copies the payload. Throws BadMagic for anything
/// but the image/label magics, Truncated when the header or payload is
/// short, CountMismatch when trailing bytes follow the payload.
auto parse_idx(std::span<const std::uint8_t> bytes) -> RawIdxFile;

auto serialize_idx(const RawIdxFile& file) -> std::vector<std::uint8_t>;

/// Reads a whole file, transparently inflating gzip input.
auto read_file_bytes(const std::filesystem::path& path) -> std::vector<std::uint8_t>;

} // namespace lloom
