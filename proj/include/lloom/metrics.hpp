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

#include "lloom/model.hpp"

#include <optional>
#include <span>
#include <vector>

namespace lloom {

struct SeparationMetrics {
    std::optional<double> silhouette; // absent with fewer than 2 classes
    double within_class_var = 0.0;
    double between_class_var = 0.0;
    std::optional<double> classifier_accuracy; // absent with no labels
    double spread = 0.0;                       // trace of the covariance of mu
    double mean_mu_norm = 0.0;
    double mean_sigma = 0.0;
    std::size_t n = 0;
    std::size_t labeled = 0;
};

/// Mean silhouette of row-major points [n, dim] under Euclidean distance.
/// Singleton clusters and points with a = b = 0 score 0. Throws
/// TooFewClasses with fewer than 2 distinct labels.
auto silhouette(std::span<const float> points, std::size_t dim, std::span<const int> labels)
    -> double;

/// Per-point mean squared distance to the class centroid (within) and the
/// count-weighted squared centroid spread (between). within + between is
/// the total variance of the labeled points.
struct ClassVariance {
    double within = 0.0;
    double between = 0.0;
};
auto class_variance(std::span<const float> points, std::size_t dim, std::span<const int> labels)
    -> ClassVariance;

/// Class statistics use the points that carry a label. Spread and the
/// collapse indicators use every point; accuracy compares pred with label.
auto separation_metrics(const Embedding& e, const std::vector<std::optional<int>>& labels)
    -> SeparationMetrics;

} // namespace lloom
