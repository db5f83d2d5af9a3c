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

#include "lloom/checkpoint.hpp"

#include "lloom/json_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace lloom {

namespace {

constexpr std::array<char, 8> kMagic = {'L', 'L', 'O', 'O', 'M', 'C', 'K', 'P'};

template <class U>
void put_le(std::string& out, U v)
{
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFU));
    }
}

template <class U>
auto get_le(const std::string& in, std::size_t offset) -> U
{
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        v |= static_cast<U>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
    }
    return v;
}

void put_floats(std::string& out, std::span<const float> values)
{
    for (float f : values) {
        put_le(out, std::bit_cast<std::uint32_t>(f));
    }
}

auto corrupt(const std::string& what) -> Error
{
    return Error(ErrorCode::CorruptManifest, what);
}

} // namespace

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path)
{
    nlohmann::json manifest = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& e : checkpoint.params) {
        manifest.push_back({{"name", e.name}, {"shape", e.value.shape()}, {"offset", offset}});
        offset += e.value.size() * sizeof(float);
    }
    const std::size_t section = offset;
    const bool has_moments = checkpoint.adam.m.size() == checkpoint.params.size();
    nlohmann::json header = {
        {"model", checkpoint.model},
        {"train", checkpoint.train},
        {"epochs_completed", checkpoint.epochs_completed},
        {"cycle", checkpoint.cycle},
        {"adam", {{"t", checkpoint.adam.t}, {"hyper", checkpoint.adam.hyper},
                  {"moments", has_moments}}},
        {"section_bytes", section},
        {"manifest", manifest},
    };
    const std::string header_text = header.dump();

    std::string bytes(kMagic.begin(), kMagic.end());
    put_le(bytes, kCheckpointVersion);
    put_le(bytes, static_cast<std::uint64_t>(header_text.size()));
    bytes += header_text;
    for (const auto& e : checkpoint.params) {
        put_floats(bytes, e.value.data());
    }
    if (has_moments) {
        for (const auto* store : {&checkpoint.adam.m, &checkpoint.adam.v}) {
            for (std::size_t i = 0; i < checkpoint.params.size(); ++i) {
                const auto& p = checkpoint.params.at(i);
                const auto& e = store->at(i);
                if (e.name != p.name || e.value.shape() != p.value.shape()) {
                    throw Error(ErrorCode::ShapeMismatch, "Adam moments do not mirror " + p.name);
                }
                put_floats(bytes, e.value.data());
            }
        }
    }

    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
        }
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw Error(ErrorCode::IoError, "short write to " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw Error(ErrorCode::IoError, "cannot move checkpoint into " + path.string());
    }
}

auto load_checkpoint(const std::filesystem::path& path) -> Checkpoint
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    }
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    constexpr std::size_t prefix = kMagic.size() + 4 + 8;
    if (bytes.size() < prefix) {
        throw corrupt("file shorter than the checkpoint prefix");
    }
    if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
        throw corrupt("not a checkpoint file");
    }
    const auto version = get_le<std::uint32_t>(bytes, kMagic.size());
    if (version != kCheckpointVersion) {
        throw Error(ErrorCode::VersionMismatch, "checkpoint version " + std::to_string(version) +
                                                    ", expected " +
                                                    std::to_string(kCheckpointVersion));
    }
    const auto header_len = get_le<std::uint64_t>(bytes, kMagic.size() + 4);
    if (header_len > bytes.size() - prefix) {
        throw corrupt("header runs past end of file");
    }

    Checkpoint ck;
    std::size_t section = 0;
    bool has_moments = false;
    std::vector<std::tuple<std::string, Shape, std::size_t>> entries;
    try {
        const auto header = nlohmann::json::parse(bytes.substr(prefix, header_len));
        ck.model = header.at("model").get<ModelConfig>();
        ck.train = header.at("train").get<TrainConfig>();
        ck.epochs_completed = header.at("epochs_completed").get<std::size_t>();
        ck.cycle = header.at("cycle").get<std::uint64_t>();
        ck.adam.t = header.at("adam").at("t").get<std::uint64_t>();
        ck.adam.hyper = header.at("adam").at("hyper").get<AdamHyper>();
        has_moments = header.at("adam").at("moments").get<bool>();
        section = header.at("section_bytes").get<std::size_t>();
        for (const auto& m : header.at("manifest")) {
            entries.emplace_back(m.at("name").get<std::string>(), m.at("shape").get<Shape>(),
                                 m.at("offset").get<std::size_t>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw corrupt(std::string("bad header: ") + e.what());
    }

    const std::size_t blob = prefix + header_len;
    const std::size_t sections = has_moments ? 3 : 1;
    if (section % sizeof(float) != 0 || bytes.size() - blob != sections * section) {
        throw corrupt("blob is " + std::to_string(bytes.size() - blob) + " bytes, manifest needs " +
                      std::to_string(sections * section));
    }
    // Offsets must tile the section without gaps or overlap.
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    for (const auto& [name, shape, offset] : entries) {
        if (shape.empty() || std::find(shape.begin(), shape.end(), 0U) != shape.end()) {
            throw corrupt("bad shape for " + name);
        }
        const std::size_t len = shape_size(shape) * sizeof(float);
        if (offset % sizeof(float) != 0 || offset > section || len > section - offset) {
            throw corrupt("entry " + name + " out of bounds");
        }
        spans.emplace_back(offset, len);
    }
    std::sort(spans.begin(), spans.end());
    std::size_t cursor = 0;
    for (const auto& [offset, len] : spans) {
        if (offset != cursor) {
            throw corrupt("manifest offsets overlap or leave gaps");
        }
        cursor += len;
    }
    if (cursor != section) {
        throw corrupt("manifest does not cover the parameter section");
    }

    const auto read_section = [&](std::size_t base) {
        ParamStore<float> store;
        for (const auto& [name, shape, offset] : entries) {
            Tensor<float> t(shape);
            for (std::size_t i = 0; i < t.size(); ++i) {
                t[i] = std::bit_cast<float>(
                    get_le<std::uint32_t>(bytes, base + offset + i * sizeof(float)));
            }
            try {
                store.add(name, std::move(t));
            } catch (const Error&) {
                throw corrupt("duplicate entry " + name);
            }
        }
        return store;
    };
    ck.params = read_section(blob);
    if (has_moments) {
        ck.adam.m = read_section(blob + section);
        ck.adam.v = read_section(blob + 2 * section);
    }
    return ck;
}

} // namespace lloom
