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

#include "lloom/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace lloom {

using Shape = std::vector<std::size_t>;

inline auto shape_size(const Shape& shape) -> std::size_t
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>{});
}

inline auto shape_string(const Shape& shape) -> std::string
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "x" : "") << shape[i];
    }
    os << ']';
    return os.str();
}

/// Dense row-major array with value semantics.
template <class T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T{0})
        : shape_(std::move(shape)), data_(shape_size(shape_), fill)
    {
        check_shape();
    }

    Tensor(Shape shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data))
    {
        check_shape();
        if (data_.size() != shape_size(shape_)) {
            throw Error(ErrorCode::ShapeMismatch,
                        "data length " + std::to_string(data_.size()) +
                            " does not match shape " + shape_string(shape_));
        }
    }

    [[nodiscard]] auto shape() const noexcept -> const Shape& { return shape_; }
    [[nodiscard]] auto rank() const noexcept -> std::size_t { return shape_.size(); }
    [[nodiscard]] auto dim(std::size_t i) const -> std::size_t { return shape_.at(i); }
    [[nodiscard]] auto size() const noexcept -> std::size_t { return data_.size(); }
    [[nodiscard]] auto empty() const noexcept -> bool { return data_.empty(); }

    [[nodiscard]] auto data() noexcept -> std::span<T> { return data_; }
    [[nodiscard]] auto data() const noexcept -> std::span<const T> { return data_; }
    [[nodiscard]] auto raw() noexcept -> T* { return data_.data(); }
    [[nodiscard]] auto raw() const noexcept -> const T* { return data_.data(); }
    [[nodiscard]] auto values() const noexcept -> const std::vector<T>& { return data_; }

    auto operator[](std::size_t i) noexcept -> T& { return data_[i]; }
    auto operator[](std::size_t i) const noexcept -> const T& { return data_[i]; }

    /// Row-major 2D access.
    auto at(std::size_t r, std::size_t c) -> T& { return data_[r * shape_.back() + c]; }
    [[nodiscard]] auto at(std::size_t r, std::size_t c) const -> const T&
    {
        return data_[r * shape_.back() + c];
    }

    [[nodiscard]] auto reshaped(Shape shape) const -> Tensor
    {
        return Tensor(std::move(shape), data_);
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    template <class U>
    [[nodiscard]] auto cast() const -> Tensor<U>
    {
        std::vector<U> out(data_.size());
        std::transform(data_.begin(), data_.end(), out.begin(),
                       [](T v) { return static_cast<U>(v); });
        return Tensor<U>(shape_, std::move(out));
    }

    [[nodiscard]] auto all_finite() const -> bool
    {
        return std::all_of(data_.begin(), data_.end(),
                           [](T v) { return std::isfinite(v); });
    }

    friend auto operator==(const Tensor& a, const Tensor& b) -> bool
    {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    void check_shape() const
    {
        for (auto d : shape_) {
            if (d == 0) {
                throw Error(ErrorCode::ShapeMismatch,
                            "zero-sized dimension in " + shape_string(shape_));
            }
        }
    }

    Shape shape_;
    std::vector<T> data_;
};

inline void expect_shape(const Shape& got, const Shape& want, const char* what)
{
    if (got != want) {
        throw Error(ErrorCode::ShapeMismatch, std::string(what) + ": expected " +
                                                  shape_string(want) + ", got " +
                                                  shape_string(got));
    }
}

inline void expect_rank(const Shape& got, std::size_t rank, const char* what)
{
    if (got.size() != rank) {
        throw Error(ErrorCode::ShapeMismatch,
                    std::string(what) + ": expected rank " + std::to_string(rank) +
                        ", got " + shape_string(got));
    }
}

} // namespace lloom
