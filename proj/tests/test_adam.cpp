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

#include "lloom/adam.hpp"
#include "lloom/params.hpp"

#include "support/check.hpp"

#include <doctest.h>

#include <cmath>

using namespace lloom;

TEST_CASE("adam update")
{
    SUBCASE("first step from zero with unit gradient moves by lr")
    {
        ParamStore<double> p;
        p.add("w", Tensor<double>({1}));
        ParamStore<double> g;
        g.add("w", Tensor<double>({1}, 1.0));
        auto state = AdamState<double>::for_params(p);
        adam_step(p, g, state);
        // m_hat = 1, v_hat = 1, step = lr / (1 + eps).
        CHECK(p.get("w")[0] == doctest::Approx(-0.005).epsilon(1e-9));
        CHECK(std::abs(p.get("w")[0] - (-5e-3 / (1.0 + 1e-8))) < 1e-15);
        CHECK(state.t == 1);
    }
    SUBCASE("zero gradient leaves params alone but counts the step")
    {
        ParamStore<double> p;
        p.add("w", test::random_tensor({3, 3}, 1));
        const auto before = p;
        auto state = AdamState<double>::for_params(p);
        state.t = 7;
        ParamStore<double> zero = p.zeros_like();
        adam_step(p, zero, state);
        CHECK(p == before);
        CHECK(state.t == 8);
    }
    SUBCASE("two identical runs agree bitwise")
    {
        auto run = [] {
            ParamStore<float> p = init_params<float>(
                {ParamSpec{"a", {4, 3}, ParamKind::Weight, 4, 3}, ParamSpec{"b", {3}, ParamKind::Bias}},
                9);
            auto state = AdamState<float>::for_params(p);
            for (int k = 0; k < 25; ++k) {
                ParamStore<float> g;
                for (const auto& e : p) {
                    auto t = test::random_tensor(e.value.shape(), 100 + k).cast<float>();
                    g.add(e.name, t);
                }
                adam_step(p, g, state);
            }
            return std::pair{p, state.m};
        };
        const auto [p1, m1] = run();
        const auto [p2, m2] = run();
        CHECK(p1 == p2);
        CHECK(m1 == m2);
    }
    SUBCASE("later steps follow the bias-corrected recurrence")
    {
        ParamStore<double> p;
        p.add("w", Tensor<double>({1}, 0.3));
        auto state = AdamState<double>::for_params(p);
        double x = 0.3, m = 0.0, v = 0.0;
        for (int t = 1; t <= 5; ++t) {
            const double grad = 0.5 * t - 1.0;
            ParamStore<double> g;
            g.add("w", Tensor<double>({1}, grad));
            adam_step(p, g, state);
            m = 0.9 * m + 0.1 * grad;
            v = 0.999 * v + 0.001 * grad * grad;
            const double mh = m / (1.0 - std::pow(0.9, t));
            const double vh = v / (1.0 - std::pow(0.999, t));
            x -= 5e-3 * mh / (std::sqrt(vh) + 1e-8);
            CHECK(std::abs(p.get("w")[0] - x) < 1e-15);
        }
    }
    SUBCASE("mismatched stores are rejected")
    {
        ParamStore<double> p;
        p.add("w", Tensor<double>({2}));
        ParamStore<double> g;
        g.add("v", Tensor<double>({2}));
        auto state = AdamState<double>::for_params(p);
        CHECK_THROWS_AS(adam_step(p, g, state), Error);
    }
}

TEST_CASE("glorot initialisation")
{
    const std::vector<ParamSpec> specs{ParamSpec{"enc/w", {300, 400}, ParamKind::Weight, 300, 400},
                                       ParamSpec{"enc/b", {400}, ParamKind::Bias}};
    const auto a = init_params<double>(specs, 42);
    CHECK(a == init_params<double>(specs, 42));
    CHECK(!(a == init_params<double>(specs, 43)));
    for (auto v : a.get("enc/b").data()) {
        CHECK(v == 0.0);
    }
    const double bound = glorot_bound(300, 400);
    const auto& w = a.get("enc/w");
    double sum = 0.0, sq = 0.0;
    for (auto v : w.data()) {
        CHECK(std::abs(v) <= bound);
        sum += v;
        sq += v * v;
    }
    const double n = static_cast<double>(w.size());
    const double sd = bound / std::sqrt(3.0);
    CHECK(n >= 1e5);
    CHECK(std::abs(sum / n) < 3.0 * sd / std::sqrt(n));
    CHECK(std::abs(std::sqrt(sq / n) - sd) < 0.01 * sd);

    SUBCASE("streams are keyed by name")
    {
        const std::vector<ParamSpec> more{ParamSpec{"extra/w", {5, 5}, ParamKind::Weight, 5, 5},
                                          specs[0], specs[1]};
        CHECK(init_params<double>(more, 42).get("enc/w") == w);
    }
}
