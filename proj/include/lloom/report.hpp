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

#include "lloom/metrics.hpp"
#include "lloom/model.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace lloom {

/// Shortest decimal text that parses back to the same float.
auto format_float(float v) -> std::string;

/// `id,mu_x,mu_y[,mu_z],sigma_x,sigma_y[,sigma_z],label,pred`; the label
/// field is empty when absent.
auto points_csv(const Embedding& e, const std::vector<std::optional<int>>& labels) -> std::string;
void export_csv(const Embedding& e, const std::vector<std::optional<int>>& labels,
                const std::filesystem::path& path);

struct CsvPoints {
    Embedding embedding;
    std::vector<std::optional<int>> labels;
};
/// Inverse of points_csv. Throws InvalidArgument on malformed text.
auto parse_points_csv(const std::string& text) -> CsvPoints;

struct Histogram {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<std::size_t> counts;
};
/// Equal-width bins over [min, max] of the data; the maximum lands in the
/// last bin. Constant data puts everything in the first bin.
auto histogram(std::span<const double> values, std::size_t bins = 30) -> Histogram;

/// Scatter of mu (first two coordinates) coloured by label, with marginal
/// histograms along the top and right edges.
auto scatter_svg(const Embedding& e, const std::vector<std::optional<int>>& labels,
                 const std::string& title) -> std::string;
void emit_scatter_svg(const Embedding& e, const std::vector<std::optional<int>>& labels,
                      const std::filesystem::path& path, const std::string& title = {});

auto to_json(const SeparationMetrics& m) -> nlohmann::json;

/// Writes text to path; throws IoError.
void write_text(const std::filesystem::path& path, const std::string& text);
auto read_text(const std::filesystem::path& path) -> std::string;

} // namespace lloom
