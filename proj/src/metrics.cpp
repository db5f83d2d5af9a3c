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

#include "lloom/metrics.hpp"

#include "lloom/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

namespace lloom {

namespace {

auto distance(const float* a, const float* b, std::size_t dim) -> double
{
    double s = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
        const double d = static_cast<double>(a[j]) - static_cast<double>(b[j]);
        s += d * d;
    }
    return std::sqrt(s);
}

} // namespace

auto silhouette(std::span<const float> points, std::size_t dim, std::span<const int> labels)
    -> double
{
    const std::size_t n = labels.size();
    if (points.size() != n * dim) {
        throw Error(ErrorCode::ShapeMismatch, "silhouette points and labels disagree");
    }
    std::vector<int> classes(labels.begin(), labels.end());
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    if (classes.size() < 2) {
        throw Error(ErrorCode::TooFewClasses, "silhouette needs at least 2 classes");
    }
    std::vector<std::size_t> slot(n);
    std::vector<std::size_t> count(classes.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
        slot[i] = static_cast<std::size_t>(
            std::lower_bound(classes.begin(), classes.end(), labels[i]) - classes.begin());
        ++count[slot[i]];
    }

    std::vector<double> sums(classes.size());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (count[slot[i]] == 1) {
            continue;
        }
        std::fill(sums.begin(), sums.end(), 0.0);
        const float* pi = points.data() + i * dim;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                sums[slot[j]] += distance(pi, points.data() + j * dim, dim);
            }
        }
        const double a = sums[slot[i]] / static_cast<double>(count[slot[i]] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < classes.size(); ++c) {
            if (c != slot[i]) {
                b = std::min(b, sums[c] / static_cast<double>(count[c]));
            }
        }
        const double m = std::max(a, b);
        if (m > 0.0) {
            total += (b - a) / m;
        }
    }
    return total / static_cast<double>(n);
}

auto class_variance(std::span<const float> points, std::size_t dim, std::span<const int> labels)
    -> ClassVariance
{
    const std::size_t n = labels.size();
    if (points.size() != n * dim) {
        throw Error(ErrorCode::ShapeMismatch, "class_variance points and labels disagree");
    }
    ClassVariance out;
    if (n == 0) {
        return out;
    }
    std::map<int, std::pair<std::vector<double>, std::size_t>> centroids;
    std::vector<double> grand(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        auto& [c, k] = centroids[labels[i]];
        c.resize(dim, 0.0);
        for (std::size_t j = 0; j < dim; ++j) {
            c[j] += points[i * dim + j];
            grand[j] += points[i * dim + j];
        }
        ++k;
    }
    for (auto& [label, ck] : centroids) {
        for (auto& v : ck.first) {
            v /= static_cast<double>(ck.second);
        }
    }
    for (auto& v : grand) {
        v /= static_cast<double>(n);
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto& c = centroids[labels[i]].first;
        for (std::size_t j = 0; j < dim; ++j) {
            const double d = points[i * dim + j] - c[j];
            out.within += d * d;
        }
    }
    for (const auto& [label, ck] : centroids) {
        for (std::size_t j = 0; j < dim; ++j) {
            const double d = ck.first[j] - grand[j];
            out.between += static_cast<double>(ck.second) * d * d;
        }
    }
    out.within /= static_cast<double>(n);
    out.between /= static_cast<double>(n);
    return out;
}

auto separation_metrics(const Embedding& e, const std::vector<std::optional<int>>& labels)
    -> SeparationMetrics
{
    if (labels.size() != e.size()) {
        throw Error(ErrorCode::ShapeMismatch, "labels do not match the embedding");
    }
    SeparationMetrics m;
    m.n = e.size();
    const std::size_t dim = e.dim;

    std::vector<float> labeled_points;
    std::vector<int> labeled;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < e.size(); ++i) {
        if (labels[i]) {
            const auto mu = e.mu_of(i);
            labeled_points.insert(labeled_points.end(), mu.begin(), mu.end());
            labeled.push_back(*labels[i]);
            correct += e.pred[i] == *labels[i] ? 1 : 0;
        }
    }
    m.labeled = labeled.size();
    if (!labeled.empty()) {
        m.classifier_accuracy = static_cast<double>(correct) / static_cast<double>(labeled.size());
        const auto cv = class_variance(labeled_points, dim, labeled);
        m.within_class_var = cv.within;
        m.between_class_var = cv.between;
        if (std::set<int>(labeled.begin(), labeled.end()).size() >= 2) {
            m.silhouette = silhouette(labeled_points, dim, labeled);
        }
    }

    if (m.n > 0) {
        std::vector<double> mean(dim, 0.0);
        double norm_sum = 0.0;
        double sigma_sum = 0.0;
        for (std::size_t i = 0; i < m.n; ++i) {
            const auto mu = e.mu_of(i);
            double sq = 0.0;
            for (std::size_t j = 0; j < dim; ++j) {
                mean[j] += mu[j];
                sq += static_cast<double>(mu[j]) * mu[j];
                sigma_sum += e.sigma_of(i)[j];
            }
            norm_sum += std::sqrt(sq);
        }
        for (auto& v : mean) {
            v /= static_cast<double>(m.n);
        }
        for (std::size_t i = 0; i < m.n; ++i) {
            const auto mu = e.mu_of(i);
            for (std::size_t j = 0; j < dim; ++j) {
                const double d = mu[j] - mean[j];
                m.spread += d * d;
            }
        }
        m.spread /= static_cast<double>(m.n);
        m.mean_mu_norm = norm_sum / static_cast<double>(m.n);
        m.mean_sigma = sigma_sum / static_cast<double>(m.n * dim);
    }
    return m;
}

} // namespace lloom
