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

#include "lloom/idx.hpp"

#include "lloom/error.hpp"

#include <zlib.h>

#include <array>
#include <memory>
#include <numeric>
#include <string>

namespace lloom {

namespace {

auto read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) -> std::uint32_t
{
    return (std::uint32_t{bytes[offset]} << 24U) | (std::uint32_t{bytes[offset + 1]} << 16U) |
           (std::uint32_t{bytes[offset + 2]} << 8U) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v)
{
    out.push_back(static_cast<std::uint8_t>(v >> 24U));
    out.push_back(static_cast<std::uint8_t>(v >> 16U));
    out.push_back(static_cast<std::uint8_t>(v >> 8U));
    out.push_back(static_cast<std::uint8_t>(v));
}

} // namespace

auto parse_idx(std::span<const std::uint8_t> bytes) -> RawIdxFile
{
    if (bytes.size() < 4) {
        throw Error(ErrorCode::Truncated, "IDX header shorter than 4 bytes");
    }
    RawIdxFile file;
    file.magic = read_be32(bytes, 0);
    if (file.magic != kIdxImageMagic && file.magic != kIdxLabelMagic) {
        throw Error(ErrorCode::BadMagic, "unsupported IDX magic " + std::to_string(file.magic));
    }
    const std::size_t ndim = bytes[3];
    const std::size_t header = 4 + 4 * ndim;
    if (bytes.size() < header) {
        throw Error(ErrorCode::Truncated, "IDX header needs " + std::to_string(header) +
                                              " bytes, got " + std::to_string(bytes.size()));
    }
    std::size_t expected = 1;
    for (std::size_t i = 0; i < ndim; ++i) {
        file.dims.push_back(read_be32(bytes, 4 + 4 * i));
        expected *= file.dims.back();
    }
    const std::size_t available = bytes.size() - header;
    if (available < expected) {
        throw Error(ErrorCode::Truncated, "IDX payload has " + std::to_string(available) +
                                              " bytes, dims need " + std::to_string(expected));
    }
    if (available > expected) {
        throw Error(ErrorCode::CountMismatch,
                    std::to_string(available - expected) + " trailing bytes after IDX payload");
    }
    file.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
    return file;
}

auto serialize_idx(const RawIdxFile& file) -> std::vector<std::uint8_t>
{
    std::vector<std::uint8_t> out;
    out.reserve(4 + 4 * file.dims.size() + file.payload.size());
    write_be32(out, (file.magic & 0xFFFFFF00U) | static_cast<std::uint32_t>(file.dims.size()));
    for (auto d : file.dims) {
        write_be32(out, d);
    }
    out.insert(out.end(), file.payload.begin(), file.payload.end());
    return out;
}

auto read_file_bytes(const std::filesystem::path& path) -> std::vector<std::uint8_t>
{
    // gzread passes uncompressed files through unchanged.
    std::unique_ptr<gzFile_s, decltype(&gzclose)> in(gzopen(path.c_str(), "rb"), &gzclose);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    }
    std::vector<std::uint8_t> bytes;
    std::array<std::uint8_t, 1U << 16U> buffer{};
    for (;;) {
        const int n = gzread(in.get(), buffer.data(), static_cast<unsigned>(buffer.size()));
        if (n < 0) {
            throw Error(ErrorCode::IoError, "read failed for " + path.string());
        }
        if (n == 0) {
            break;
        }
        bytes.insert(bytes.end(), buffer.begin(), buffer.begin() + n);
    }
    return bytes;
}

} // namespace lloom
