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

#include "lloom/ops.hpp"

#include "lloom/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace lloom::ad {

namespace {

using kernels::Trans;

template <class T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src)
{
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] += src[i];
    }
}

template <class T>
auto scalar(T v) -> Tensor<T>
{
    return Tensor<T>({1}, std::vector<T>{v});
}

template <class T>
auto sigmoid_scalar(T v) -> T
{
    return v >= T{0} ? T{1} / (T{1} + std::exp(-v)) : std::exp(v) / (T{1} + std::exp(v));
}

void expect_same_tape(const void* a, const void* b)
{
    if (a != b) {
        throw Error(ErrorCode::InvalidArgument, "operands live on different tapes");
    }
}

} // namespace

template <class T>
auto matmul(Var<T> a, Var<T> b) -> Var<T>
{
    expect_same_tape(a.tape, b.tape);
    auto out = kernels::matmul(a.value(), b.value());
    const std::size_t m = a.shape()[0];
    const std::size_t k = a.shape()[1];
    const std::size_t n = b.shape()[1];
    return a.tape->record(std::move(out), {a, b}, [=](Tape<T>& t, std::size_t self) {
        const auto& dy = t.grad(self);
        if (t.requires_grad(a)) {
            kernels::gemm(Trans::No, Trans::Yes, m, k, n, dy.raw(), t.value(b).raw(),
                          t.grad_buffer(a).raw(), true);
        }
        if (t.requires_grad(b)) {
            kernels::gemm(Trans::Yes, Trans::No, k, n, m, t.value(a).raw(), dy.raw(),
                          t.grad_buffer(b).raw(), true);
        }
    });
}

template <class T>
auto add_row_bias(Var<T> x, Var<T> b) -> Var<T>
{
    expect_rank(x.shape(), 2, "row bias input");
    expect_shape(b.shape(), {x.shape()[1]}, "row bias");
    Tensor<T> out = x.value();
    const std::size_t rows = out.dim(0);
    const std::size_t n = out.dim(1);
    const auto& bias = b.value();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
            out[r * n + c] += bias[c];
        }
    }
    return x.tape->record(std::move(out), {x, b}, [=](Tape<T>& t, std::size_t self) {
        const auto& dy = t.grad(self);
        if (t.requires_grad(x)) {
            accumulate(t.grad_buffer(x), dy);
        }
        if (t.requires_grad(b)) {
            auto& db = t.grad_buffer(b);
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < n; ++c) {
                    db[c] += dy[r * n + c];
                }
            }
        }
    });
}

template <class T>
auto dense(Var<T> x, Var<T> w, Var<T> b) -> Var<T>
{
    return add_row_bias(matmul(x, w), b);
}

template <class T>
auto conv2d(Var<T> x, Var<T> k, std::size_t stride, std::size_t padding) -> Var<T>
{
    expect_same_tape(x.tape, k.tape);
    const auto& kv = k.value();
    expect_rank(kv.shape(), 4, "conv kernel");
    if (x.shape().size() != 4 || x.shape()[1] != kv.dim(1)) {
        throw Error(ErrorCode::ShapeMismatch, "conv input " + shape_string(x.shape()) +
                                                  " vs kernel " + shape_string(kv.shape()));
    }
    const auto g = kernels::conv_geometry(x.shape(), kv.dim(2), kv.dim(3), stride, padding);
    const std::size_t out_c = kv.dim(0);
    const std::size_t plane = g.out_h * g.out_w;
    auto col = std::make_shared<std::vector<T>>(g.col_rows() * g.col_cols());
    kernels::im2col(g, x.value().raw(), col->data());
    std::vector<T> out_cm(out_c * g.col_cols());
    kernels::gemm(Trans::No, Trans::No, out_c, g.col_cols(), g.col_rows(), kv.raw(),
                  col->data(), out_cm.data(), false);
    Tensor<T> out({g.batch, out_c, g.out_h, g.out_w});
    kernels::channel_major_to_batch_major(out_cm.data(), out.raw(), g.batch, out_c, plane);

    return x.tape->record(std::move(out), {x, k}, [=](Tape<T>& t, std::size_t self) {
        const auto& dy = t.grad(self);
        std::vector<T> dy_cm(dy.size());
        kernels::batch_major_to_channel_major(dy.raw(), dy_cm.data(), g.batch, out_c, plane);
        if (t.requires_grad(k)) {
            kernels::gemm(Trans::No, Trans::Yes, out_c, g.col_rows(), g.col_cols(),
                          dy_cm.data(), col->data(), t.grad_buffer(k).raw(), true);
        }
        if (t.requires_grad(x)) {
            std::vector<T> dcol(g.col_rows() * g.col_cols());
            kernels::gemm(Trans::Yes, Trans::No, g.col_rows(), g.col_cols(), out_c,
                          t.value(k).raw(), dy_cm.data(), dcol.data(), false);
            kernels::col2im(g, dcol.data(), t.grad_buffer(x).raw());
        }
    });
}

template <class T>
auto conv_transpose2d(Var<T> x, Var<T> k, std::size_t stride, std::size_t padding)
    -> Var<T>
{
    expect_same_tape(x.tape, k.tape);
    const auto& xv = x.value();
    const auto& kv = k.value();
    expect_rank(xv.shape(), 4, "transposed conv input");
    expect_rank(kv.shape(), 4, "transposed conv kernel");
    if (xv.dim(1) != kv.dim(0) || stride == 0) {
        throw Error(ErrorCode::ShapeMismatch, "transposed conv input " +
                                                  shape_string(xv.shape()) + " vs kernel " +
                                                  shape_string(kv.shape()));
    }
    const std::size_t batch = xv.dim(0);
    const std::size_t in_c = xv.dim(1);
    const std::size_t out_c = kv.dim(1);
    const std::size_t span_h = (xv.dim(2) - 1) * stride + kv.dim(2);
    const std::size_t span_w = (xv.dim(3) - 1) * stride + kv.dim(3);
    if (span_h <= 2 * padding || span_w <= 2 * padding) {
        throw Error(ErrorCode::ShapeMismatch, "transposed conv padding too large");
    }
    const Shape out_shape{batch, out_c, span_h - 2 * padding, span_w - 2 * padding};
    // Geometry of the adjoint convolution, which maps the output back to x.
    const auto g = kernels::conv_geometry(out_shape, kv.dim(2), kv.dim(3), stride, padding);
    const std::size_t plane = xv.dim(2) * xv.dim(3);

    auto x_cm = std::make_shared<std::vector<T>>(xv.size());
    kernels::batch_major_to_channel_major(xv.raw(), x_cm->data(), batch, in_c, plane);
    std::vector<T> col(g.col_rows() * g.col_cols());
    kernels::gemm(Trans::Yes, Trans::No, g.col_rows(), g.col_cols(), in_c, kv.raw(),
                  x_cm->data(), col.data(), false);
    Tensor<T> out(out_shape);
    kernels::col2im(g, col.data(), out.raw());

    return x.tape->record(std::move(out), {x, k}, [=](Tape<T>& t, std::size_t self) {
        const auto& dy = t.grad(self);
        std::vector<T> dcol(g.col_rows() * g.col_cols());
        kernels::im2col(g, dy.raw(), dcol.data());
        if (t.requires_grad(k)) {
            kernels::gemm(Trans::No, Trans::Yes, in_c, g.col_rows(), g.col_cols(),
                          x_cm->data(), dcol.data(), t.grad_buffer(k).raw(), true);
        }
        if (t.requires_grad(x)) {
            std::vector<T> dx_cm(in_c * g.col_cols());
            kernels::gemm(Trans::No, Trans::No, in_c, g.col_cols(), g.col_rows(),
                          t.value(k).raw(), dcol.data(), dx_cm.data(), false);
            Tensor<T> dx(t.value(x).shape());
            kernels::channel_major_to_batch_major(dx_cm.data(), dx.raw(), batch, in_c, plane);
            accumulate(t.grad_buffer(x), dx);
        }
    });
}

template <class T>
auto add_channel_bias(Var<T> x, Var<T> b) -> Var<T>
{
    expect_rank(x.shape(), 4, "channel bias input");
    const std::size_t batch = x.shape()[0];
    const std::size_t channels = x.shape()[1];
    const std::size_t plane = x.shape()[2] * x.shape()[3];
    expect_shape(b.shape(), {channels}, "channel bias");
    Tensor<T> out = x.value();
    const auto& bias = b.value();
    for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t c = 0; c < channels; ++c) {
            T* p = out.raw() + (n * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                p[i] += bias[c];
            }
        }
    }
    return x.tape->record(std::move(out), {x, b}, [=](Tape<T>& t, std::size_t self) {
        const auto& dy = t.grad(self);
        if (t.requires_grad(x)) {
            accumulate(t.grad_buffer(x), dy);
        }
        if (t.requires_grad(b)) {
            auto& db = t.grad_buffer(b);
            for (std::size_t n = 0; n < batch; ++n) {
                for (std::size_t c = 0; c < channels; ++c) {
                    const T* p = dy.raw() + (n * channels + c) * plane;
                    T s{0};
                    for (std::size_t i = 0; i < plane; ++i) {
                        s += p[i];
                    }
                    db[c] += s;
                }
            }
        }
    });
}

template <class T>
auto relu(Var<T> x) -> Var<T>
{
    auto out = kernels::relu(x.value());
    return x.tape->record(std::move(out), {x}, [=](Tape<T>& t, std::size_t self) {
        const auto& dy = t.grad(self);
        const auto& xv = t.value(x);
        auto& dx = t.grad_buffer(x);
        for (std::size_t i = 0; i < dx.size(); ++i) {
            if (xv[i] > T{0}) {
                dx[i] += dy[i];
            }
        }
    });
}

template <class T>
auto sigmoid(Var<T> x) -> Var<T>
{
    auto out = kernels::sigmoid(x.value());
    return x.tape->record(std::move(out), {x}, [=](Tape<T>& t, std::size_t self) {
        const auto& dy = t.grad(self);
        const auto& y = t.value(self);
        auto& dx = t.grad_buffer(x);
        for (std::size_t i = 0; i < dx.size(); ++i) {
            dx[i] += dy[i] * y[i] * (T{1} - y[i]);
        }
    });
}

template <class T>
auto exp(Var<T> x) -> Var<T>
{
    Tensor<T> out = x.value();
    for (auto& v : out.data()) {
        v = std::exp(v);
    }
    return x.tape->record(std::move(out), {x}, [=](Tape<T>& t, std::size_t self) {
        const auto& dy = t.grad(self);
        const auto& y = t.value(self);
        auto& dx = t.grad_buffer(x);
        for (std::size_t i = 0; i < dx.size(); ++i) {
            dx[i] += dy[i] * y[i];
        }
    });
}

template <class T>
auto scale(Var<T> x, T factor) -> Var<T>
{
    Tensor<T> out = x.value();
    for (auto& v : out.data()) {
        v *= factor;
    }
    return x.tape->record(std::move(out), {x}, [=](Tape<T>& t, std::size_t self) {
        const auto& dy = t.grad(self);
        auto& dx = t.grad_buffer(x);
        for (std::size_t i = 0; i < dx.size(); ++i) {
            dx[i] += factor * dy[i];
        }
    });
}

template <class T>
auto add(Var<T> a, Var<T> b) -> Var<T>
{
    expect_same_tape(a.tape, b.tape);
    expect_shape(b.shape(), a.shape(), "add");
    Tensor<T> out = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += bv[i];
    }
    return a.tape->record(std::move(out), {a, b}, [=](Tape<T>& t, std::size_t self) {
        const auto& dy = t.grad(self);
        if (t.requires_grad(a)) {
            accumulate(t.grad_buffer(a), dy);
        }
        if (t.requires_grad(b)) {
            accumulate(t.grad_buffer(b), dy);
        }
    });
}

template <class T>
auto mul(Var<T> a, Var<T> b) -> Var<T>
{
    expect_same_tape(a.tape, b.tape);
    expect_shape(b.shape(), a.shape(), "mul");
    Tensor<T> out = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] *= bv[i];
    }
    return a.tape->record(std::move(out), {a, b}, [=](Tape<T>& t, std::size_t self) {
        const auto& dy = t.grad(self);
        const auto& av = t.value(a);
        const auto& bvv = t.value(b);
        if (t.requires_grad(a)) {
            auto& da = t.grad_buffer(a);
            for (std::size_t i = 0; i < da.size(); ++i) {
                da[i] += dy[i] * bvv[i];
            }
        }
        if (t.requires_grad(b)) {
            auto& db = t.grad_buffer(b);
            for (std::size_t i = 0; i < db.size(); ++i) {
                db[i] += dy[i] * av[i];
            }
        }
    });
}

template <class T>
auto clamp(Var<T> x, T lo, T hi) -> Var<T>
{
    Tensor<T> out = x.value();
    for (auto& v : out.data()) {
        v = std::clamp(v, lo, hi);
    }
    return x.tape->record(std::move(out), {x}, [=](Tape<T>& t, std::size_t self) {
        const auto& dy = t.grad(self);
        const auto& xv = t.value(x);
        auto& dx = t.grad_buffer(x);
        for (std::size_t i = 0; i < dx.size(); ++i) {
            if (xv[i] >= lo && xv[i] <= hi) {
                dx[i] += dy[i];
            }
        }
    });
}

template <class T>
auto reshape(Var<T> x, Shape shape) -> Var<T>
{
    auto out = x.value().reshaped(std::move(shape));
    return x.tape->record(std::move(out), {x}, [=](Tape<T>& t, std::size_t self) {
        const auto& dy = t.grad(self);
        auto& dx = t.grad_buffer(x);
        for (std::size_t i = 0; i < dx.size(); ++i) {
            dx[i] += dy[i];
        }
    });
}

template <class T>
auto softmax(Var<T> x) -> Var<T>
{
    auto out = kernels::softmax(x.value());
    const std::size_t n = out.shape().back();
    return x.tape->record(std::move(out), {x}, [=](Tape<T>& t, std::size_t self) {
        const auto& dy = t.grad(self);
        const auto& y = t.value(self);
        auto& dx = t.grad_buffer(x);
        const std::size_t rows = y.size() / n;
        for (std::size_t r = 0; r < rows; ++r) {
            T dot{0};
            for (std::size_t i = 0; i < n; ++i) {
                dot += dy[r * n + i] * y[r * n + i];
            }
            for (std::size_t i = 0; i < n; ++i) {
                dx[r * n + i] += y[r * n + i] * (dy[r * n + i] - dot);
            }
        }
    });
}

template <class T>
auto sum(Var<T> x) -> Var<T>
{
    long double s = 0.0L;
    for (auto v : x.value().data()) {
        s += v;
    }
    return x.tape->record(scalar(static_cast<T>(s)), {x}, [=](Tape<T>& t, std::size_t self) {
        const T g = t.grad(self)[0];
        auto& dx = t.grad_buffer(x);
        for (std::size_t i = 0; i < dx.size(); ++i) {
            dx[i] += g;
        }
    });
}

template <class T>
auto linear_combination(const std::vector<Var<T>>& terms, const std::vector<T>& coeffs)
    -> Var<T>
{
    if (terms.empty() || terms.size() != coeffs.size()) {
        throw Error(ErrorCode::InvalidArgument, "linear_combination arity");
    }
    T s{0};
    for (std::size_t i = 0; i < terms.size(); ++i) {
        expect_same_tape(terms[0].tape, terms[i].tape);
        if (terms[i].size() != 1) {
            throw Error(ErrorCode::ShapeMismatch, "linear_combination expects scalars");
        }
        s += coeffs[i] * terms[i].value()[0];
    }
    std::vector<std::size_t> ids;
    for (const auto& term : terms) {
        ids.push_back(term.id);
    }
    return terms[0].tape->record(scalar(s), ids, [=](Tape<T>& t, std::size_t self) {
        const T g = t.grad(self)[0];
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (t.requires_grad(ids[i])) {
                t.grad_buffer(ids[i])[0] += coeffs[i] * g;
            }
        }
    });
}

template <class T>
auto bce(const Tensor<T>& target, Var<T> probs) -> Var<T>
{
    expect_shape(target.shape(), probs.shape(), "bce target");
    const std::size_t rows = target.shape().front();
    const T lo = static_cast<T>(kProbClamp);
    const T hi = T{1} - lo;
    const auto& p = probs.value();
    long double total = 0.0L;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const T q = std::clamp(p[i], lo, hi);
        total -= target[i] * std::log(q) + (T{1} - target[i]) * std::log(T{1} - q);
    }
    const T inv_rows = T{1} / static_cast<T>(rows);
    return probs.tape->record(
        scalar(static_cast<T>(total / static_cast<long double>(rows))), {probs},
        [=](Tape<T>& t, std::size_t self) {
            const T g = t.grad(self)[0] * inv_rows;
            const auto& pv = t.value(probs);
            auto& dp = t.grad_buffer(probs);
            for (std::size_t i = 0; i < dp.size(); ++i) {
                const T q = pv[i];
                if (q >= lo && q <= hi) {
                    dp[i] += g * (-target[i] / q + (T{1} - target[i]) / (T{1} - q));
                }
            }
        });
}

template <class T>
auto bce_with_logits(const Tensor<T>& target, Var<T> logits) -> Var<T>
{
    expect_shape(target.shape(), logits.shape(), "bce target");
    const std::size_t rows = target.shape().front();
    const T lo = static_cast<T>(kProbClamp);
    const T hi = T{1} - lo;
    const auto& l = logits.value();
    long double total = 0.0L;
    for (std::size_t i = 0; i < l.size(); ++i) {
        const T q = std::clamp(sigmoid_scalar(l[i]), lo, hi);
        total -= target[i] * std::log(q) + (T{1} - target[i]) * std::log(T{1} - q);
    }
    const T inv_rows = T{1} / static_cast<T>(rows);
    return logits.tape->record(
        scalar(static_cast<T>(total / static_cast<long double>(rows))), {logits},
        [=](Tape<T>& t, std::size_t self) {
            const T g = t.grad(self)[0] * inv_rows;
            const auto& lv = t.value(logits);
            auto& dl = t.grad_buffer(logits);
            for (std::size_t i = 0; i < dl.size(); ++i) {
                dl[i] += g * (sigmoid_scalar(lv[i]) - target[i]);
            }
        });
}

template <class T>
auto kl_standard_normal(Var<T> mu, Var<T> logvar) -> Var<T>
{
    expect_same_tape(mu.tape, logvar.tape);
    expect_shape(logvar.shape(), mu.shape(), "kl logvar");
    const std::size_t rows = mu.shape().front();
    const auto& m = mu.value();
    const auto& lv = logvar.value();
    long double total = 0.0L;
    for (std::size_t i = 0; i < m.size(); ++i) {
        total += T{0.5} * (m[i] * m[i] + std::exp(lv[i]) - lv[i] - T{1});
    }
    const T inv_rows = T{1} / static_cast<T>(rows);
    return mu.tape->record(
        scalar(static_cast<T>(total / static_cast<long double>(rows))), {mu, logvar},
        [=](Tape<T>& t, std::size_t self) {
            const T g = t.grad(self)[0] * inv_rows;
            if (t.requires_grad(mu)) {
                const auto& mv = t.value(mu);
                auto& dm = t.grad_buffer(mu);
                for (std::size_t i = 0; i < dm.size(); ++i) {
                    dm[i] += g * mv[i];
                }
            }
            if (t.requires_grad(logvar)) {
                const auto& lvv = t.value(logvar);
                auto& dl = t.grad_buffer(logvar);
                for (std::size_t i = 0; i < dl.size(); ++i) {
                    dl[i] += g * T{0.5} * (std::exp(lvv[i]) - T{1});
                }
            }
        });
}

namespace {

void expect_mask(std::size_t rows, std::span<const unsigned char> mask)
{
    if (mask.size() != rows) {
        throw Error(ErrorCode::ShapeMismatch, "label mask has " +
                                                  std::to_string(mask.size()) +
                                                  " entries for " + std::to_string(rows) +
                                                  " rows");
    }
}

auto count_labeled(std::span<const unsigned char> mask) -> std::size_t
{
    return static_cast<std::size_t>(
        std::count_if(mask.begin(), mask.end(), [](unsigned char m) { return m != 0; }));
}

} // namespace

template <class T>
auto cross_entropy(const Tensor<T>& one_hot, std::span<const unsigned char> mask,
                   Var<T> probs) -> Var<T>
{
    expect_shape(one_hot.shape(), probs.shape(), "cross_entropy target");
    const std::size_t rows = probs.shape()[0];
    const std::size_t n = probs.shape()[1];
    expect_mask(rows, mask);
    const std::size_t labeled = count_labeled(mask);
    if (labeled == 0) {
        return probs.tape->constant(scalar(T{0}));
    }
    const T lo = static_cast<T>(kProbClamp);
    const auto& p = probs.value();
    long double total = 0.0L;
    for (std::size_t r = 0; r < rows; ++r) {
        if (mask[r] == 0) {
            continue;
        }
        for (std::size_t c = 0; c < n; ++c) {
            const T y = one_hot[r * n + c];
            if (y != T{0}) {
                total -= y * std::log(std::clamp(p[r * n + c], lo, T{1}));
            }
        }
    }
    const T inv = T{1} / static_cast<T>(labeled);
    std::vector<unsigned char> m(mask.begin(), mask.end());
    return probs.tape->record(
        scalar(static_cast<T>(total / static_cast<long double>(labeled))), {probs},
        [=](Tape<T>& t, std::size_t self) {
            const T g = t.grad(self)[0] * inv;
            const auto& pv = t.value(probs);
            auto& dp = t.grad_buffer(probs);
            for (std::size_t r = 0; r < rows; ++r) {
                if (m[r] == 0) {
                    continue;
                }
                for (std::size_t c = 0; c < n; ++c) {
                    const T y = one_hot[r * n + c];
                    const T q = pv[r * n + c];
                    if (y != T{0} && q >= lo && q <= T{1}) {
                        dp[r * n + c] -= g * y / q;
                    }
                }
            }
        });
}

template <class T>
auto softmax_cross_entropy(const Tensor<T>& one_hot, std::span<const unsigned char> mask,
                           Var<T> logits) -> Var<T>
{
    expect_shape(one_hot.shape(), logits.shape(), "softmax_cross_entropy target");
    const std::size_t rows = logits.shape()[0];
    const std::size_t n = logits.shape()[1];
    expect_mask(rows, mask);
    const std::size_t labeled = count_labeled(mask);
    if (labeled == 0) {
        return logits.tape->constant(scalar(T{0}));
    }
    const auto logp = kernels::log_softmax(logits.value());
    long double total = 0.0L;
    for (std::size_t r = 0; r < rows; ++r) {
        if (mask[r] == 0) {
            continue;
        }
        for (std::size_t c = 0; c < n; ++c) {
            total -= one_hot[r * n + c] * logp[r * n + c];
        }
    }
    const T inv = T{1} / static_cast<T>(labeled);
    std::vector<unsigned char> m(mask.begin(), mask.end());
    return logits.tape->record(
        scalar(static_cast<T>(total / static_cast<long double>(labeled))), {logits},
        [=](Tape<T>& t, std::size_t self) {
            const T g = t.grad(self)[0] * inv;
            auto& dl = t.grad_buffer(logits);
            for (std::size_t r = 0; r < rows; ++r) {
                if (m[r] == 0) {
                    continue;
                }
                T mass{0};
                for (std::size_t c = 0; c < n; ++c) {
                    mass += one_hot[r * n + c];
                }
                for (std::size_t c = 0; c < n; ++c) {
                    dl[r * n + c] +=
                        g * (std::exp(logp[r * n + c]) * mass - one_hot[r * n + c]);
                }
            }
        });
}

#define LLOOM_INSTANTIATE_OPS(T)                                                        \
    template auto matmul<T>(Var<T>, Var<T>)->Var<T>;                                    \
    template auto add_row_bias<T>(Var<T>, Var<T>)->Var<T>;                              \
    template auto dense<T>(Var<T>, Var<T>, Var<T>)->Var<T>;                             \
    template auto conv2d<T>(Var<T>, Var<T>, std::size_t, std::size_t)->Var<T>;          \
    template auto conv_transpose2d<T>(Var<T>, Var<T>, std::size_t, std::size_t)->Var<T>; \
    template auto add_channel_bias<T>(Var<T>, Var<T>)->Var<T>;                          \
    template auto relu<T>(Var<T>)->Var<T>;                                              \
    template auto sigmoid<T>(Var<T>)->Var<T>;                                           \
    template auto exp<T>(Var<T>)->Var<T>;                                               \
    template auto scale<T>(Var<T>, T)->Var<T>;                                          \
    template auto add<T>(Var<T>, Var<T>)->Var<T>;                                       \
    template auto mul<T>(Var<T>, Var<T>)->Var<T>;                                       \
    template auto clamp<T>(Var<T>, T, T)->Var<T>;                                       \
    template auto reshape<T>(Var<T>, Shape)->Var<T>;                                    \
    template auto softmax<T>(Var<T>)->Var<T>;                                           \
    template auto sum<T>(Var<T>)->Var<T>;                                               \
    template auto linear_combination<T>(const std::vector<Var<T>>&,                     \
                                        const std::vector<T>&)                          \
        ->Var<T>;                                                                       \
    template auto bce<T>(const Tensor<T>&, Var<T>)->Var<T>;                             \
    template auto bce_with_logits<T>(const Tensor<T>&, Var<T>)->Var<T>;                 \
    template auto kl_standard_normal<T>(Var<T>, Var<T>)->Var<T>;                        \
    template auto cross_entropy<T>(const Tensor<T>&, std::span<const unsigned char>,    \
                                   Var<T>)                                              \
        ->Var<T>;                                                                       \
    template auto softmax_cross_entropy<T>(const Tensor<T>&,                            \
                                           std::span<const unsigned char>, Var<T>)      \
        ->Var<T>;

LLOOM_INSTANTIATE_OPS(float)
LLOOM_INSTANTIATE_OPS(double)

#undef LLOOM_INSTANTIATE_OPS

} // namespace lloom::ad
