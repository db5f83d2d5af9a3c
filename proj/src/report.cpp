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

#include "lloom/report.hpp"

#include "lloom/error.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

namespace lloom {

namespace {

constexpr std::array<const char*, 10> kPalette = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                                   "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                                                   "#bcbd22", "#17becf"};
constexpr const char* kUnlabeled = "#b0b0b0";
constexpr std::array<char, 3> kAxes = {'x', 'y', 'z'};

auto split(const std::string& line, char sep) -> std::vector<std::string>
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, sep)) {
        out.push_back(cell);
    }
    if (!line.empty() && line.back() == sep) {
        out.emplace_back();
    }
    return out;
}

template <class V>
auto parse_number(const std::string& s, V& out) -> bool
{
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && ptr == end;
}

auto fmt(double v) -> std::string
{
    std::array<char, 32> buf{};
    const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v,
                                 std::chars_format::fixed, 2);
    return {buf.data(), r.ptr};
}

} // namespace

auto format_float(float v) -> std::string
{
    std::array<char, 32> buf{};
    const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return {buf.data(), r.ptr};
}

auto points_csv(const Embedding& e, const std::vector<std::optional<int>>& labels) -> std::string
{
    if (labels.size() != e.size()) {
        throw Error(ErrorCode::ShapeMismatch, "labels do not match the embedding");
    }
    std::string out = "id";
    for (const char* prefix : {"mu_", "sigma_"}) {
        for (std::size_t j = 0; j < e.dim; ++j) {
            out += ',';
            out += prefix;
            out += kAxes.at(j);
        }
    }
    out += ",label,pred\n";
    for (std::size_t i = 0; i < e.size(); ++i) {
        out += std::to_string(e.ids[i]);
        for (float v : e.mu_of(i)) {
            out += ',' + format_float(v);
        }
        for (float v : e.sigma_of(i)) {
            out += ',' + format_float(v);
        }
        out += ',';
        if (labels[i]) {
            out += std::to_string(*labels[i]);
        }
        out += ',' + std::to_string(e.pred[i]) + '\n';
    }
    return out;
}

void export_csv(const Embedding& e, const std::vector<std::optional<int>>& labels,
                const std::filesystem::path& path)
{
    write_text(path, points_csv(e, labels));
}

auto parse_points_csv(const std::string& text) -> CsvPoints
{
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) {
        throw Error(ErrorCode::InvalidArgument, "empty CSV");
    }
    const auto header = split(line, ',');
    if (header.size() != 7 && header.size() != 9) {
        throw Error(ErrorCode::InvalidArgument, "unexpected CSV header: " + line);
    }
    CsvPoints out;
    const std::size_t dim = (header.size() - 3) / 2;
    out.embedding.dim = dim;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        const auto cells = split(line, ',');
        const auto bad = [&] {
            return Error(ErrorCode::InvalidArgument, "malformed CSV row " + std::to_string(row));
        };
        if (cells.size() != header.size()) {
            throw bad();
        }
        std::int64_t id = 0;
        if (!parse_number(cells[0], id)) {
            throw bad();
        }
        out.embedding.ids.push_back(id);
        for (std::size_t j = 0; j < 2 * dim; ++j) {
            float v = 0.0F;
            if (!parse_number(cells[1 + j], v)) {
                throw bad();
            }
            (j < dim ? out.embedding.mu : out.embedding.sigma).push_back(v);
        }
        const auto& label_cell = cells[1 + 2 * dim];
        if (label_cell.empty()) {
            out.labels.emplace_back();
        } else {
            int l = 0;
            if (!parse_number(label_cell, l)) {
                throw bad();
            }
            out.labels.emplace_back(l);
        }
        int pred = 0;
        if (!parse_number(cells[2 + 2 * dim], pred)) {
            throw bad();
        }
        out.embedding.pred.push_back(pred);
        out.embedding.confidence.push_back(0.0F);
    }
    return out;
}

auto histogram(std::span<const double> values, std::size_t bins) -> Histogram
{
    Histogram h;
    h.counts.assign(std::max<std::size_t>(bins, 1), 0);
    if (values.empty()) {
        return h;
    }
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    h.lo = *lo;
    h.hi = *hi;
    const double width = (h.hi - h.lo) / static_cast<double>(h.counts.size());
    for (double v : values) {
        std::size_t b = 0;
        if (width > 0.0) {
            b = static_cast<std::size_t>((v - h.lo) / width);
            b = std::min(b, h.counts.size() - 1);
        }
        ++h.counts[b];
    }
    return h;
}

auto scatter_svg(const Embedding& e, const std::vector<std::optional<int>>& labels,
                 const std::string& title) -> std::string
{
    constexpr double plot = 480.0;
    constexpr double margin = 40.0;
    constexpr double marginal = 80.0;
    const double left = margin;
    const double top = margin + marginal;
    const double width = left + plot + marginal + margin;
    const double height = top + plot + margin;

    std::vector<double> xs(e.size());
    std::vector<double> ys(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) {
        xs[i] = e.mu_of(i)[0];
        ys[i] = e.mu_of(i)[1];
    }
    const auto hx = histogram(xs);
    const auto hy = histogram(ys);
    const auto to_px = [&](double v, const Histogram& h) {
        const double span = h.hi - h.lo;
        return span > 0.0 ? (v - h.lo) / span * plot : plot / 2.0;
    };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width) << "\" height=\""
        << fmt(height) << "\" viewBox=\"0 0 " << fmt(width) << ' ' << fmt(height) << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!title.empty()) {
        svg << "<text x=\"" << fmt(left) << "\" y=\"24\" font-family=\"sans-serif\" "
            << "font-size=\"14\">" << title << "</text>\n";
    }
    svg << "<rect class=\"frame\" x=\"" << fmt(left) << "\" y=\"" << fmt(top) << "\" width=\""
        << fmt(plot) << "\" height=\"" << fmt(plot) << "\" fill=\"none\" stroke=\"#444\"/>\n";

    svg << "<g class=\"scatter\">\n";
    for (std::size_t i = 0; i < e.size(); ++i) {
        const char* colour =
            labels[i] ? kPalette.at(static_cast<std::size_t>(*labels[i])) : kUnlabeled;
        svg << "<circle cx=\"" << fmt(left + to_px(xs[i], hx)) << "\" cy=\""
            << fmt(top + plot - to_px(ys[i], hy)) << "\" r=\"1.5\" fill=\"" << colour
            << "\" fill-opacity=\"0.6\"/>\n";
    }
    svg << "</g>\n";

    const auto bars = [&](const Histogram& h, bool horizontal) {
        const std::size_t peak = *std::max_element(h.counts.begin(), h.counts.end());
        const double bin = plot / static_cast<double>(h.counts.size());
        svg << "<g class=\"" << (horizontal ? "marginal-x" : "marginal-y") << "\">\n";
        for (std::size_t b = 0; b < h.counts.size(); ++b) {
            const double len =
                peak > 0 ? static_cast<double>(h.counts[b]) / static_cast<double>(peak) * (marginal - 8.0)
                         : 0.0;
            if (horizontal) {
                svg << "<rect x=\"" << fmt(left + b * bin) << "\" y=\"" << fmt(top - 4.0 - len)
                    << "\" width=\"" << fmt(bin) << "\" height=\"" << fmt(len);
            } else {
                svg << "<rect x=\"" << fmt(left + plot + 4.0) << "\" y=\""
                    << fmt(top + plot - (b + 1) * bin) << "\" width=\"" << fmt(len)
                    << "\" height=\"" << fmt(bin);
            }
            svg << "\" data-count=\"" << h.counts[b] << "\" fill=\"#6a8caf\"/>\n";
        }
        svg << "</g>\n";
    };
    bars(hx, true);
    bars(hy, false);
    svg << "</svg>\n";
    return svg.str();
}

void emit_scatter_svg(const Embedding& e, const std::vector<std::optional<int>>& labels,
                      const std::filesystem::path& path, const std::string& title)
{
    write_text(path, scatter_svg(e, labels, title));
}

auto to_json(const SeparationMetrics& m) -> nlohmann::json
{
    const auto opt = [](const std::optional<double>& v) -> nlohmann::json {
        return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
    };
    return {{"silhouette", opt(m.silhouette)},
            {"within_class_var", m.within_class_var},
            {"between_class_var", m.between_class_var},
            {"classifier_accuracy", opt(m.classifier_accuracy)},
            {"spread", m.spread},
            {"mean_mu_norm", m.mean_mu_norm},
            {"mean_sigma", m.mean_sigma},
            {"n", m.n},
            {"labeled", m.labeled}};
}

void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot write " + path.string());
    }
    out << text;
    if (!out) {
        throw Error(ErrorCode::IoError, "short write to " + path.string());
    }
}

auto read_text(const std::filesystem::path& path) -> std::string
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace lloom
