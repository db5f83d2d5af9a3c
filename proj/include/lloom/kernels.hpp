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

#include "lloom/tensor.hpp"

#include <cstddef>

// Tape-free numeric kernels. The autodiff ops in tape.hpp are thin wrappers
// that call these and record the matching backward kernels.
namespace lloom::kernels {

enum class Trans { No, Yes };

/// C[m x n] (+)= op(A) * op(B) on row-major buffers; op(A) is m x k.
template <class T>
void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n,
          std::size_t k, const T* a, const T* b, T* c, bool accumulate);

/// Geometry of a 2D cross-correlation over an image of `channels` planes.
struct ConvGeometry {
    std::size_t batch = 1;
    std::size_t channels = 1;
    std::size_t height = 1;
    std::size_t width = 1;
    std::size_t kernel_h = 1;
    std::size_t kernel_w = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t out_h = 1;
    std::size_t out_w = 1;

    [[nodiscard]] auto col_rows() const -> std::size_t
    {
        return channels * kernel_h * kernel_w;
    }
    [[nodiscard]] auto col_cols() const -> std::size_t
    {
        return batch * out_h * out_w;
    }
};

/// Builds the geometry for input shape [B,C,H,W] and a kh x kw window;
/// throws ShapeMismatch when the window does not fit the padded input.
auto conv_geometry(const Shape& input, std::size_t kernel_h, std::size_t kernel_w,
                   std::size_t stride, std::size_t padding) -> ConvGeometry;

/// Unrolls [B,C,H,W] into a [C*kh*kw, B*oh*ow] matrix.
template <class T>
void im2col(const ConvGeometry& g, const T* image, T* col);

/// Adjoint of im2col: scatters-adds the column matrix back into the image.
template <class T>
void col2im(const ConvGeometry& g, const T* col, T* image);

/// [B, C, P] -> [C, B*P]
template <class T>
void batch_major_to_channel_major(const T* src, T* dst, std::size_t batch,
                                  std::size_t channels, std::size_t plane);

/// [C, B*P] -> [B, C, P]
template <class T>
void channel_major_to_batch_major(const T* src, T* dst, std::size_t batch,
                                  std::size_t channels, std::size_t plane);

// Dense layer: y = xW + b with b broadcast over rows.
template <class T>
auto dense_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b)
    -> Tensor<T>;

template <class T>
auto matmul(const Tensor<T>& a, const Tensor<T>& b) -> Tensor<T>;

/// x: [B, C_in, H, W], k: [C_out, C_in, kh, kw]. No bias.
template <class T>
auto conv2d_forward(const Tensor<T>& x, const Tensor<T>& k, std::size_t stride,
                    std::size_t padding) -> Tensor<T>;

/// Input gradient of conv2d_forward for an output gradient `dy`.
template <class T>
auto conv2d_input_grad(const Tensor<T>& dy, const Tensor<T>& k,
                       const Shape& input_shape, std::size_t stride,
                       std::size_t padding) -> Tensor<T>;

/// x: [B, C_in, H, W], k: [C_in, C_out, kh, kw]. Output spatial size is
/// (H-1)*stride - 2*padding + kh. This is the input gradient of a
/// convolution that maps [C_out, OH, OW] to [C_in, H, W].
template <class T>
auto transposed_conv2d_forward(const Tensor<T>& x, const Tensor<T>& k,
                               std::size_t stride, std::size_t padding)
    -> Tensor<T>;

template <class T>
auto relu(const Tensor<T>& x) -> Tensor<T>;

template <class T>
auto sigmoid(const Tensor<T>& x) -> Tensor<T>;

/// Softmax over the last axis, stabilised by max subtraction.
template <class T>
auto softmax(const Tensor<T>& x) -> Tensor<T>;

/// Row-wise log-softmax over the last axis.
template <class T>
auto log_softmax(const Tensor<T>& x) -> Tensor<T>;

} // namespace lloom::kernels
