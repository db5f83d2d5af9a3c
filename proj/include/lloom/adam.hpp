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

#include "lloom/params.hpp"

#include <cmath>
#include <cstdint>

namespace lloom {

struct AdamHyper {
    double lr = 5e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <class T>
struct AdamState {
    AdamHyper hyper;
    ParamStore<T> m;
    ParamStore<T> v;
    std::uint64_t t = 0;

    static auto for_params(const ParamStore<T>& params, AdamHyper hyper = {}) -> AdamState
    {
        return AdamState{hyper, params.zeros_like(), params.zeros_like(), 0};
    }
};

/// One bias-corrected Adam update over every entry of `params`.
template <class T>
void adam_step(ParamStore<T>& params, const ParamStore<T>& grads, AdamState<T>& state)
{
    if (grads.size() != params.size() || state.m.size() != params.size() ||
        state.v.size() != params.size()) {
        throw Error(ErrorCode::ShapeMismatch, "adam: parameter/gradient/state arity");
    }
    state.t += 1;
    const auto& h = state.hyper;
    const T b1 = static_cast<T>(h.beta1);
    const T b2 = static_cast<T>(h.beta2);
    const T lr = static_cast<T>(h.lr);
    const T eps = static_cast<T>(h.eps);
    const T c1 = static_cast<T>(1.0 - std::pow(h.beta1, static_cast<double>(state.t)));
    const T c2 = static_cast<T>(1.0 - std::pow(h.beta2, static_cast<double>(state.t)));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params.at(i);
        const auto& g = grads.at(i);
        auto& m = state.m.at(i);
        auto& v = state.v.at(i);
        if (g.name != p.name || m.name != p.name || v.name != p.name) {
            throw Error(ErrorCode::ShapeMismatch, "adam: entry order differs at " + p.name);
        }
        expect_shape(g.value.shape(), p.value.shape(), p.name.c_str());
        auto pd = p.value.data();
        auto gd = g.value.data();
        auto md = m.value.data();
        auto vd = v.value.data();
        for (std::size_t j = 0; j < pd.size(); ++j) {
            md[j] = b1 * md[j] + (T{1} - b1) * gd[j];
            vd[j] = b2 * vd[j] + (T{1} - b2) * gd[j] * gd[j];
            const T m_hat = md[j] / c1;
            const T v_hat = vd[j] / c2;
            pd[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

} // namespace lloom
