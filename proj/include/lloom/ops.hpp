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

#include "lloom/tape.hpp"

#include <cstddef>
#include <span>
#include <vector>

// Differentiable ops over Var<T>. Each records its own backward rule.
namespace lloom::ad {

template <class T> auto matmul(Var<T> a, Var<T> b) -> Var<T>;
/// x[B,n] + b[n] broadcast over rows.
template <class T> auto add_row_bias(Var<T> x, Var<T> b) -> Var<T>;
template <class T> auto dense(Var<T> x, Var<T> w, Var<T> b) -> Var<T>;

/// x[B,C,H,W] with kernel [C_out, C_in, kh, kw].
template <class T>
auto conv2d(Var<T> x, Var<T> k, std::size_t stride, std::size_t padding) -> Var<T>;
/// x[B,C_in,H,W] with kernel [C_in, C_out, kh, kw].
template <class T>
auto conv_transpose2d(Var<T> x, Var<T> k, std::size_t stride, std::size_t padding)
    -> Var<T>;
/// x[B,C,H,W] + b[C].
template <class T> auto add_channel_bias(Var<T> x, Var<T> b) -> Var<T>;

template <class T> auto relu(Var<T> x) -> Var<T>;
template <class T> auto sigmoid(Var<T> x) -> Var<T>;
template <class T> auto exp(Var<T> x) -> Var<T>;
template <class T> auto scale(Var<T> x, T factor) -> Var<T>;
template <class T> auto add(Var<T> a, Var<T> b) -> Var<T>;
template <class T> auto mul(Var<T> a, Var<T> b) -> Var<T>;
/// Values outside [lo, hi] are pinned and pass no gradient.
template <class T> auto clamp(Var<T> x, T lo, T hi) -> Var<T>;
template <class T> auto reshape(Var<T> x, Shape shape) -> Var<T>;
template <class T> auto softmax(Var<T> x) -> Var<T>;
/// Sum of all entries, shape [1].
template <class T> auto sum(Var<T> x) -> Var<T>;
/// Sum_i coeff_i * term_i over scalar terms, shape [1].
template <class T>
auto linear_combination(const std::vector<Var<T>>& terms, const std::vector<T>& coeffs)
    -> Var<T>;

// ---- loss terms; all return shape [1] ------------------------------------

/// Probability clamp used by every log-likelihood term.
inline constexpr double kProbClamp = 1e-7;

/// Bernoulli cross-entropy summed over each row, mean over rows. `probs`
/// are clamped to [1e-7, 1-1e-7] before the logs.
template <class T> auto bce(const Tensor<T>& target, Var<T> probs) -> Var<T>;

/// Same value as bce(target, sigmoid(logits)) but differentiated through
/// the logits directly (gradient sigmoid(l) - x), which stays informative
/// when the sigmoid saturates.
template <class T> auto bce_with_logits(const Tensor<T>& target, Var<T> logits) -> Var<T>;

/// 0.5 * sum(mu^2 + exp(lv) - lv - 1) per row, mean over rows.
template <class T> auto kl_standard_normal(Var<T> mu, Var<T> logvar) -> Var<T>;

/// -sum(y * log(clamp(p))) averaged over rows with mask[r] != 0. Exactly 0,
/// with no gradient, when no row is labeled.
template <class T>
auto cross_entropy(const Tensor<T>& one_hot, std::span<const unsigned char> mask,
                   Var<T> probs) -> Var<T>;

/// Fused log-softmax + masked cross-entropy on logits. Same aggregation as
/// cross_entropy; log-sum-exp keeps it finite, so no probability clamp.
template <class T>
auto softmax_cross_entropy(const Tensor<T>& one_hot, std::span<const unsigned char> mask,
                           Var<T> logits) -> Var<T>;

} // namespace lloom::ad
