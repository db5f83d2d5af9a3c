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

#include "lloom/kernels.hpp"

#include <Eigen/Core>

#include <cmath>
#include <limits>

namespace lloom::kernels {

namespace {

template <class T>
using RowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

auto idx(std::size_t v) -> Eigen::Index { return static_cast<Eigen::Index>(v); }

} // namespace

// [B, C, P] -> [C, B*P]
template <class T>
void batch_major_to_channel_major(const T* src, T* dst, std::size_t batch,
                                  std::size_t channels, std::size_t plane)
{
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < channels; ++c) {
            const T* s = src + (b * channels + c) * plane;
            T* d = dst + c * batch * plane + b * plane;
            std::copy(s, s + plane, d);
        }
    }
}

// [C, B*P] -> [B, C, P]
template <class T>
void channel_major_to_batch_major(const T* src, T* dst, std::size_t batch,
                                  std::size_t channels, std::size_t plane)
{
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < channels; ++c) {
            const T* s = src + c * batch * plane + b * plane;
            T* d = dst + (b * channels + c) * plane;
            std::copy(s, s + plane, d);
        }
    }
}

template <class T>
void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n,
          std::size_t k, const T* a, const T* b, T* c, bool accumulate)
{
    using Map = Eigen::Map<RowMajor<T>>;
    using CMap = Eigen::Map<const RowMajor<T>>;
    Map out(c, idx(m), idx(n));
    // Eigen peels unaligned leading elements onto a scalar path, so the
    // product is formed in an aligned buffer and only then written out.
    thread_local RowMajor<T> product;
    const auto run = [&](const auto& lhs, const auto& rhs) {
        product.noalias() = lhs * rhs;
        if (accumulate) {
            out += product;
        } else {
            out = product;
        }
    };
    const bool ta = trans_a == Trans::Yes;
    const bool tb = trans_b == Trans::Yes;
    if (!ta && !tb) {
        run(CMap(a, idx(m), idx(k)), CMap(b, idx(k), idx(n)));
    } else if (ta && !tb) {
        run(CMap(a, idx(k), idx(m)).transpose(), CMap(b, idx(k), idx(n)));
    } else if (!ta && tb) {
        run(CMap(a, idx(m), idx(k)), CMap(b, idx(n), idx(k)).transpose());
    } else {
        run(CMap(a, idx(k), idx(m)).transpose(), CMap(b, idx(n), idx(k)).transpose());
    }
}

auto conv_geometry(const Shape& input, std::size_t kernel_h, std::size_t kernel_w,
                   std::size_t stride, std::size_t padding) -> ConvGeometry
{
    expect_rank(input, 4, "conv input");
    if (stride == 0) {
        throw Error(ErrorCode::ShapeMismatch, "conv stride must be positive");
    }
    ConvGeometry g;
    g.batch = input[0];
    g.channels = input[1];
    g.height = input[2];
    g.width = input[3];
    g.kernel_h = kernel_h;
    g.kernel_w = kernel_w;
    g.stride = stride;
    g.padding = padding;
    if (kernel_h > g.height + 2 * padding || kernel_w > g.width + 2 * padding) {
        throw Error(ErrorCode::ShapeMismatch,
                    "kernel larger than padded input " + shape_string(input));
    }
    g.out_h = (g.height + 2 * padding - kernel_h) / stride + 1;
    g.out_w = (g.width + 2 * padding - kernel_w) / stride + 1;
    return g;
}

template <class T>
void im2col(const ConvGeometry& g, const T* image, T* col)
{
    const std::size_t plane_out = g.out_h * g.out_w;
    const std::size_t cols = g.col_cols();
    const auto pad = static_cast<std::ptrdiff_t>(g.padding);
    const auto h = static_cast<std::ptrdiff_t>(g.height);
    const auto w = static_cast<std::ptrdiff_t>(g.width);
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t kh = 0; kh < g.kernel_h; ++kh) {
            for (std::size_t kw = 0; kw < g.kernel_w; ++kw) {
                const std::size_t row = (c * g.kernel_h + kh) * g.kernel_w + kw;
                T* dst = col + row * cols;
                for (std::size_t b = 0; b < g.batch; ++b) {
                    const T* src = image + (b * g.channels + c) * g.height * g.width;
                    T* out = dst + b * plane_out;
                    for (std::size_t oh = 0; oh < g.out_h; ++oh) {
                        const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + kh) - pad;
                        if (ih < 0 || ih >= h) {
                            std::fill(out + oh * g.out_w, out + (oh + 1) * g.out_w, T{0});
                            continue;
                        }
                        for (std::size_t ow = 0; ow < g.out_w; ++ow) {
                            const auto iw =
                                static_cast<std::ptrdiff_t>(ow * g.stride + kw) - pad;
                            out[oh * g.out_w + ow] =
                                (iw < 0 || iw >= w) ? T{0} : src[ih * w + iw];
                        }
                    }
                }
            }
        }
    }
}

template <class T>
void col2im(const ConvGeometry& g, const T* col, T* image)
{
    const std::size_t plane_out = g.out_h * g.out_w;
    const std::size_t cols = g.col_cols();
    const auto pad = static_cast<std::ptrdiff_t>(g.padding);
    const auto h = static_cast<std::ptrdiff_t>(g.height);
    const auto w = static_cast<std::ptrdiff_t>(g.width);
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t kh = 0; kh < g.kernel_h; ++kh) {
            for (std::size_t kw = 0; kw < g.kernel_w; ++kw) {
                const std::size_t row = (c * g.kernel_h + kh) * g.kernel_w + kw;
                const T* src_row = col + row * cols;
                for (std::size_t b = 0; b < g.batch; ++b) {
                    T* dst = image + (b * g.channels + c) * g.height * g.width;
                    const T* src = src_row + b * plane_out;
                    for (std::size_t oh = 0; oh < g.out_h; ++oh) {
                        const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + kh) - pad;
                        if (ih < 0 || ih >= h) {
                            continue;
                        }
                        for (std::size_t ow = 0; ow < g.out_w; ++ow) {
                            const auto iw =
                                static_cast<std::ptrdiff_t>(ow * g.stride + kw) - pad;
                            if (iw >= 0 && iw < w) {
                                dst[ih * w + iw] += src[oh * g.out_w + ow];
                            }
                        }
                    }
                }
            }
        }
    }
}

template <class T>
auto matmul(const Tensor<T>& a, const Tensor<T>& b) -> Tensor<T>
{
    expect_rank(a.shape(), 2, "matmul lhs");
    expect_rank(b.shape(), 2, "matmul rhs");
    if (a.dim(1) != b.dim(0)) {
        throw Error(ErrorCode::ShapeMismatch, "matmul inner dimensions " +
                                                  shape_string(a.shape()) + " * " +
                                                  shape_string(b.shape()));
    }
    Tensor<T> out({a.dim(0), b.dim(1)});
    gemm(Trans::No, Trans::No, a.dim(0), b.dim(1), a.dim(1), a.raw(), b.raw(),
         out.raw(), false);
    return out;
}

template <class T>
auto dense_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b)
    -> Tensor<T>
{
    auto out = matmul(x, w);
    expect_shape(b.shape(), {w.dim(1)}, "dense bias");
    const std::size_t n = out.dim(1);
    for (std::size_t r = 0; r < out.dim(0); ++r) {
        for (std::size_t c = 0; c < n; ++c) {
            out[r * n + c] += b[c];
        }
    }
    return out;
}

template <class T>
auto conv2d_forward(const Tensor<T>& x, const Tensor<T>& k, std::size_t stride,
                    std::size_t padding) -> Tensor<T>
{
    expect_rank(k.shape(), 4, "conv kernel");
    if (x.rank() != 4 || x.dim(1) != k.dim(1)) {
        throw Error(ErrorCode::ShapeMismatch, "conv input " + shape_string(x.shape()) +
                                                  " vs kernel " + shape_string(k.shape()));
    }
    const auto g = conv_geometry(x.shape(), k.dim(2), k.dim(3), stride, padding);
    const std::size_t out_c = k.dim(0);
    std::vector<T> col(g.col_rows() * g.col_cols());
    im2col(g, x.raw(), col.data());
    std::vector<T> out_cm(out_c * g.col_cols());
    gemm(Trans::No, Trans::No, out_c, g.col_cols(), g.col_rows(), k.raw(), col.data(),
         out_cm.data(), false);
    Tensor<T> out({g.batch, out_c, g.out_h, g.out_w});
    channel_major_to_batch_major(out_cm.data(), out.raw(), g.batch, out_c,
                                 g.out_h * g.out_w);
    return out;
}

template <class T>
auto conv2d_input_grad(const Tensor<T>& dy, const Tensor<T>& k,
                       const Shape& input_shape, std::size_t stride,
                       std::size_t padding) -> Tensor<T>
{
    expect_rank(k.shape(), 4, "conv kernel");
    expect_rank(input_shape, 4, "conv input");
    const auto g = conv_geometry(input_shape, k.dim(2), k.dim(3), stride, padding);
    const std::size_t out_c = k.dim(0);
    expect_shape(dy.shape(), {g.batch, out_c, g.out_h, g.out_w}, "conv output grad");
    if (input_shape[1] != k.dim(1)) {
        throw Error(ErrorCode::ShapeMismatch, "conv kernel channels");
    }
    std::vector<T> dy_cm(dy.size());
    batch_major_to_channel_major(dy.raw(), dy_cm.data(), g.batch, out_c,
                                 g.out_h * g.out_w);
    std::vector<T> dcol(g.col_rows() * g.col_cols());
    gemm(Trans::Yes, Trans::No, g.col_rows(), g.col_cols(), out_c, k.raw(), dy_cm.data(),
         dcol.data(), false);
    Tensor<T> dx(input_shape);
    col2im(g, dcol.data(), dx.raw());
    return dx;
}

template <class T>
auto transposed_conv2d_forward(const Tensor<T>& x, const Tensor<T>& k,
                               std::size_t stride, std::size_t padding)
    -> Tensor<T>
{
    expect_rank(x.shape(), 4, "transposed conv input");
    expect_rank(k.shape(), 4, "transposed conv kernel");
    if (x.dim(1) != k.dim(0) || stride == 0) {
        throw Error(ErrorCode::ShapeMismatch, "transposed conv input " +
                                                  shape_string(x.shape()) + " vs kernel " +
                                                  shape_string(k.shape()));
    }
    const std::size_t span_h = (x.dim(2) - 1) * stride + k.dim(2);
    const std::size_t span_w = (x.dim(3) - 1) * stride + k.dim(3);
    if (span_h <= 2 * padding || span_w <= 2 * padding) {
        throw Error(ErrorCode::ShapeMismatch, "transposed conv padding too large");
    }
    const Shape out_shape{x.dim(0), k.dim(1), span_h - 2 * padding, span_w - 2 * padding};
    return conv2d_input_grad(x, k, out_shape, stride, padding);
}

template <class T>
auto relu(const Tensor<T>& x) -> Tensor<T>
{
    Tensor<T> out = x;
    for (auto& v : out.data()) {
        v = v > T{0} ? v : T{0};
    }
    return out;
}

template <class T>
auto sigmoid(const Tensor<T>& x) -> Tensor<T>
{
    Tensor<T> out = x;
    for (auto& v : out.data()) {
        v = v >= T{0} ? T{1} / (T{1} + std::exp(-v)) : std::exp(v) / (T{1} + std::exp(v));
    }
    return out;
}

template <class T>
auto softmax(const Tensor<T>& x) -> Tensor<T>
{
    Tensor<T> out = x;
    const std::size_t n = x.shape().back();
    const std::size_t rows = x.size() / n;
    for (std::size_t r = 0; r < rows; ++r) {
        T* row = out.raw() + r * n;
        const T mx = *std::max_element(row, row + n);
        T sum{0};
        for (std::size_t i = 0; i < n; ++i) {
            row[i] = std::exp(row[i] - mx);
            sum += row[i];
        }
        for (std::size_t i = 0; i < n; ++i) {
            row[i] /= sum;
        }
    }
    return out;
}

template <class T>
auto log_softmax(const Tensor<T>& x) -> Tensor<T>
{
    Tensor<T> out = x;
    const std::size_t n = x.shape().back();
    const std::size_t rows = x.size() / n;
    for (std::size_t r = 0; r < rows; ++r) {
        T* row = out.raw() + r * n;
        const T mx = *std::max_element(row, row + n);
        T sum{0};
        for (std::size_t i = 0; i < n; ++i) {
            sum += std::exp(row[i] - mx);
        }
        const T lse = mx + std::log(sum);
        for (std::size_t i = 0; i < n; ++i) {
            row[i] -= lse;
        }
    }
    return out;
}

#define LLOOM_INSTANTIATE_KERNELS(T)                                                    \
    template void gemm<T>(Trans, Trans, std::size_t, std::size_t, std::size_t,         \
                          const T*, const T*, T*, bool);                               \
    template void im2col<T>(const ConvGeometry&, const T*, T*);                        \
    template void col2im<T>(const ConvGeometry&, const T*, T*);                        \
    template auto matmul<T>(const Tensor<T>&, const Tensor<T>&)->Tensor<T>;            \
    template auto dense_forward<T>(const Tensor<T>&, const Tensor<T>&,                 \
                                   const Tensor<T>&)                                   \
        ->Tensor<T>;                                                                   \
    template auto conv2d_forward<T>(const Tensor<T>&, const Tensor<T>&, std::size_t,   \
                                    std::size_t)                                       \
        ->Tensor<T>;                                                                   \
    template auto conv2d_input_grad<T>(const Tensor<T>&, const Tensor<T>&,             \
                                       const Shape&, std::size_t, std::size_t)         \
        ->Tensor<T>;                                                                   \
    template auto transposed_conv2d_forward<T>(const Tensor<T>&, const Tensor<T>&,     \
                                               std::size_t, std::size_t)               \
        ->Tensor<T>;                                                                   \
    template auto relu<T>(const Tensor<T>&)->Tensor<T>;                                \
    template auto sigmoid<T>(const Tensor<T>&)->Tensor<T>;                             \
    template auto softmax<T>(const Tensor<T>&)->Tensor<T>;                             \
    template auto log_softmax<T>(const Tensor<T>&)->Tensor<T>;                        \
    template void batch_major_to_channel_major<T>(const T*, T*, std::size_t,           \
                                                  std::size_t, std::size_t);           \
    template void channel_major_to_batch_major<T>(const T*, T*, std::size_t,           \
                                                  std::size_t, std::size_t);

LLOOM_INSTANTIATE_KERNELS(float)
LLOOM_INSTANTIATE_KERNELS(double)

#undef LLOOM_INSTANTIATE_KERNELS

} // namespace lloom::kernels
