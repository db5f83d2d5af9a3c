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

#include "lloom/rng.hpp"
#include "lloom/tensor.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace lloom {

/// Named tensors in insertion order. Shapes are fixed once added; only the
/// values may change.
template <class T>
class ParamStore {
public:
    struct Entry {
        std::string name;
        Tensor<T> value;
    };

    void add(std::string name, Tensor<T> value)
    {
        if (index_.contains(name)) {
            throw Error(ErrorCode::InvalidArgument, "duplicate parameter " + name);
        }
        index_.emplace(name, entries_.size());
        entries_.push_back(Entry{std::move(name), std::move(value)});
    }

    [[nodiscard]] auto contains(const std::string& name) const -> bool
    {
        return index_.contains(name);
    }

    [[nodiscard]] auto get(const std::string& name) const -> const Tensor<T>&
    {
        return entries_[position(name)].value;
    }

    /// Mutable view of the values; the shape stays put.
    auto values(const std::string& name) -> std::span<T>
    {
        return entries_[position(name)].value.data();
    }

    /// Replaces a tensor's values with one of identical shape.
    void assign(const std::string& name, const Tensor<T>& value)
    {
        auto& dst = entries_[position(name)].value;
        expect_shape(value.shape(), dst.shape(), name.c_str());
        dst = value;
    }

    [[nodiscard]] auto size() const -> std::size_t { return entries_.size(); }
    [[nodiscard]] auto entries() const -> const std::vector<Entry>& { return entries_; }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }
    auto at(std::size_t i) -> Entry& { return entries_.at(i); }
    [[nodiscard]] auto at(std::size_t i) const -> const Entry& { return entries_.at(i); }

    [[nodiscard]] auto scalar_count() const -> std::size_t
    {
        std::size_t n = 0;
        for (const auto& e : entries_) {
            n += e.value.size();
        }
        return n;
    }

    [[nodiscard]] auto zeros_like() const -> ParamStore
    {
        ParamStore out;
        for (const auto& e : entries_) {
            out.add(e.name, Tensor<T>(e.value.shape()));
        }
        return out;
    }

    template <class U>
    [[nodiscard]] auto cast() const -> ParamStore<U>
    {
        ParamStore<U> out;
        for (const auto& e : entries_) {
            out.add(e.name, e.value.template cast<U>());
        }
        return out;
    }

    /// Entries whose name begins with `prefix`.
    [[nodiscard]] auto with_prefix(std::string_view prefix) const -> ParamStore
    {
        ParamStore out;
        for (const auto& e : entries_) {
            if (std::string_view(e.name).starts_with(prefix)) {
                out.add(e.name, e.value);
            }
        }
        return out;
    }

    friend auto operator==(const ParamStore& a, const ParamStore& b) -> bool
    {
        if (a.entries_.size() != b.entries_.size()) {
            return false;
        }
        for (std::size_t i = 0; i < a.entries_.size(); ++i) {
            if (a.entries_[i].name != b.entries_[i].name ||
                !(a.entries_[i].value == b.entries_[i].value)) {
                return false;
            }
        }
        return true;
    }

private:
    [[nodiscard]] auto position(const std::string& name) const -> std::size_t
    {
        const auto it = index_.find(name);
        if (it == index_.end()) {
            throw Error(ErrorCode::InvalidArgument, "unknown parameter " + name);
        }
        return it->second;
    }

    std::vector<Entry> entries_;
    std::map<std::string, std::size_t> index_;
};

enum class ParamKind { Weight, Bias };

/// One tensor to create: weights get Glorot-uniform values with the given
/// fans, biases start at zero.
struct ParamSpec {
    std::string name;
    Shape shape;
    ParamKind kind = ParamKind::Weight;
    std::size_t fan_in = 1;
    std::size_t fan_out = 1;
};

/// FNV-1a; keys each tensor's init stream by name so adding a layer does
/// not reshuffle the others.
constexpr auto name_hash(std::string_view s) noexcept -> std::uint64_t
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline auto glorot_bound(std::size_t fan_in, std::size_t fan_out) -> double
{
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

template <class T>
auto init_params(const std::vector<ParamSpec>& specs, std::uint64_t seed) -> ParamStore<T>
{
    ParamStore<T> store;
    for (const auto& spec : specs) {
        Tensor<T> value(spec.shape);
        if (spec.kind == ParamKind::Weight) {
            const double bound = glorot_bound(spec.fan_in, spec.fan_out);
            rng::Stream stream(rng::derive_key({seed, name_hash(spec.name)}));
            for (auto& v : value.data()) {
                v = static_cast<T>(stream.uniform(-bound, bound));
            }
        }
        store.add(spec.name, std::move(value));
    }
    return store;
}

} // namespace lloom
