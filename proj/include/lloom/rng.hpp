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

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <utility>

// Portable seeded randomness. The standard distributions are
// implementation-defined, so everything that must reproduce bit-for-bit
// (shuffles, init, reparameterization noise) draws from here instead.
namespace lloom::rng {

constexpr auto splitmix64(std::uint64_t x) noexcept -> std::uint64_t
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30U)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27U)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31U);
}

/// Folds a list of integers (seed, stream tag, epoch, ...) into one key.
constexpr auto derive_key(std::initializer_list<std::uint64_t> parts) noexcept
    -> std::uint64_t
{
    std::uint64_t key = 0x6a09e667f3bcc909ULL;
    for (auto p : parts) {
        key = splitmix64(key ^ splitmix64(p));
    }
    return key;
}

/// Counter-based stream: the i-th draw is a pure function of (key, i).
class Stream {
public:
    explicit constexpr Stream(std::uint64_t key) noexcept : key_(key) {}

    constexpr auto next_u64() noexcept -> std::uint64_t
    {
        return splitmix64(key_ + 0x9e3779b97f4a7c15ULL * counter_++);
    }

    /// Uniform on [0, 1) with 53 random bits.
    constexpr auto uniform() noexcept -> double
    {
        return static_cast<double>(next_u64() >> 11U) * 0x1.0p-53;
    }

    /// Uniform on (0, 1), safe for log().
    constexpr auto uniform_open() noexcept -> double
    {
        return (static_cast<double>(next_u64() >> 11U) + 0.5) * 0x1.0p-53;
    }

    auto uniform(double lo, double hi) noexcept -> double
    {
        return lo + (hi - lo) * uniform();
    }

    /// Standard normal via Box-Muller; both variates are used.
    auto normal() noexcept -> double
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_open();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    /// Unbiased integer in [0, n) by rejection.
    constexpr auto below(std::uint64_t n) noexcept -> std::uint64_t
    {
        if (n <= 1) {
            return 0;
        }
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x = next_u64();
        while (x >= limit) {
            x = next_u64();
        }
        return x % n;
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Fisher-Yates with the portable stream.
template <class RandomIt>
void shuffle(RandomIt first, RandomIt last, Stream& stream)
{
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
        const auto j = stream.below(i);
        using std::swap;
        swap(first[static_cast<std::ptrdiff_t>(i - 1)],
             first[static_cast<std::ptrdiff_t>(j)]);
    }
}

} // namespace lloom::rng
