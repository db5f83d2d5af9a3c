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

#include "lloom/dataset.hpp"

#include "lloom/error.hpp"
#include "lloom/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

namespace lloom {

Dataset::Dataset(std::size_t rows, std::size_t cols, std::vector<float> pixels,
                 std::vector<std::optional<int>> labels, std::vector<std::int64_t> sample_ids)
    : rows_(rows), cols_(cols), pixels_(std::move(pixels)), labels_(std::move(labels)),
      ids_(std::move(sample_ids))
{
    if (labels_.size() != ids_.size() || pixels_.size() != ids_.size() * rows_ * cols_) {
        throw Error(ErrorCode::CountMismatch, "dataset columns disagree on sample count");
    }
    for (auto p : pixels_) {
        if (!(p >= 0.0F && p <= 1.0F)) {
            throw Error(ErrorCode::InvalidArgument, "pixel outside [0,1]");
        }
    }
    for (const auto& l : labels_) {
        if (l && (*l < 0 || *l >= kNumClasses)) {
            throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(*l));
        }
    }
    id_index_.reserve(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        if (!id_index_.emplace(ids_[i], i).second) {
            throw Error(ErrorCode::InvalidArgument,
                        "duplicate sample id " + std::to_string(ids_[i]));
        }
    }
}

auto Dataset::image(std::size_t i) const -> std::span<const float>
{
    return std::span<const float>(pixels_).subspan(i * pixels_per_image(), pixels_per_image());
}

auto Dataset::index_of(std::int64_t id) const -> std::optional<std::size_t>
{
    const auto it = id_index_.find(id);
    if (it == id_index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

auto Dataset::labeled_count() const -> std::size_t
{
    return static_cast<std::size_t>(
        std::count_if(labels_.begin(), labels_.end(), [](const auto& l) { return l.has_value(); }));
}

auto Dataset::presence_mask() const -> std::vector<unsigned char>
{
    std::vector<unsigned char> mask(labels_.size());
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        mask[i] = labels_[i] ? 1 : 0;
    }
    return mask;
}

auto Dataset::one_hot() const -> Tensor<float>
{
    Tensor<float> out({std::max<std::size_t>(size(), 1), kNumClasses});
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        if (labels_[i]) {
            out[i * kNumClasses + static_cast<std::size_t>(*labels_[i])] = 1.0F;
        }
    }
    return out;
}

auto Dataset::with_labels(std::vector<std::optional<int>> labels) const -> Dataset
{
    return Dataset(rows_, cols_, pixels_, std::move(labels), ids_);
}

auto Dataset::select(std::span<const std::size_t> positions) const -> Dataset
{
    std::vector<float> pixels;
    pixels.reserve(positions.size() * pixels_per_image());
    std::vector<std::optional<int>> labels;
    std::vector<std::int64_t> ids;
    for (auto p : positions) {
        const auto img = image(p);
        pixels.insert(pixels.end(), img.begin(), img.end());
        labels.push_back(labels_[p]);
        ids.push_back(ids_[p]);
    }
    return Dataset(rows_, cols_, std::move(pixels), std::move(labels), std::move(ids));
}

template <class T>
auto Dataset::image_batch(std::span<const std::size_t> positions) const -> Tensor<T>
{
    Tensor<T> out({positions.size(), 1, rows_, cols_});
    const std::size_t n = pixels_per_image();
    for (std::size_t b = 0; b < positions.size(); ++b) {
        const auto img = image(positions[b]);
        std::transform(img.begin(), img.end(), out.raw() + b * n,
                       [](float v) { return static_cast<T>(v); });
    }
    return out;
}

template auto Dataset::image_batch<float>(std::span<const std::size_t>) const -> Tensor<float>;
template auto Dataset::image_batch<double>(std::span<const std::size_t>) const -> Tensor<double>;

auto load_dataset(const RawIdxFile& image_file, const RawIdxFile& label_file) -> Dataset
{
    if (image_file.magic != kIdxImageMagic || image_file.dims.size() != 3) {
        throw Error(ErrorCode::BadMagic, "expected an image IDX file");
    }
    if (label_file.magic != kIdxLabelMagic || label_file.dims.size() != 1) {
        throw Error(ErrorCode::BadMagic, "expected a label IDX file");
    }
    const std::size_t n = image_file.dims[0];
    if (label_file.dims[0] != n) {
        throw Error(ErrorCode::CountMismatch, std::to_string(n) + " images vs " +
                                                  std::to_string(label_file.dims[0]) +
                                                  " labels");
    }
    std::vector<float> pixels(image_file.payload.size());
    std::transform(image_file.payload.begin(), image_file.payload.end(), pixels.begin(),
                   [](std::uint8_t b) { return static_cast<float>(b) / 255.0F; });
    std::vector<std::optional<int>> labels(n);
    std::vector<std::int64_t> ids(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int l = label_file.payload[i];
        if (l >= kNumClasses) {
            throw Error(ErrorCode::LabelOutOfRange,
                        "label " + std::to_string(l) + " at index " + std::to_string(i));
        }
        labels[i] = l;
        ids[i] = static_cast<std::int64_t>(i);
    }
    return Dataset(image_file.dims[1], image_file.dims[2], std::move(pixels), std::move(labels),
                   std::move(ids));
}

auto load_mnist(const std::filesystem::path& dir, const std::string& split) -> Dataset
{
    const auto locate = [&](const std::string& stem) {
        for (const auto* suffix : {"", ".gz"}) {
            auto p = dir / (stem + suffix);
            if (std::filesystem::exists(p)) {
                return p;
            }
        }
        throw Error(ErrorCode::IoError, "missing " + (dir / stem).string() + "[.gz]");
    };
    const auto images = parse_idx(read_file_bytes(locate(split + "-images-idx3-ubyte")));
    const auto labels = parse_idx(read_file_bytes(locate(split + "-labels-idx1-ubyte")));
    return load_dataset(images, labels);
}

auto to_idx(const Dataset& d) -> std::pair<RawIdxFile, RawIdxFile>
{
    RawIdxFile images{kIdxImageMagic,
                      {static_cast<std::uint32_t>(d.size()), static_cast<std::uint32_t>(d.rows()),
                       static_cast<std::uint32_t>(d.cols())},
                      {}};
    images.payload.reserve(d.pixels().size());
    for (auto p : d.pixels()) {
        images.payload.push_back(static_cast<std::uint8_t>(std::lround(p * 255.0F)));
    }
    RawIdxFile labels{kIdxLabelMagic, {static_cast<std::uint32_t>(d.size())}, {}};
    for (const auto& l : d.labels()) {
        if (!l) {
            throw Error(ErrorCode::InvalidArgument, "IDX label files cannot encode absent labels");
        }
        labels.payload.push_back(static_cast<std::uint8_t>(*l));
    }
    return {std::move(images), std::move(labels)};
}

namespace {

// Positions grouped by label, in input order.
auto positions_by_class(const Dataset& d) -> std::vector<std::vector<std::size_t>>
{
    std::vector<std::vector<std::size_t>> groups(kNumClasses);
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (const auto l = d.label(i)) {
            groups[static_cast<std::size_t>(*l)].push_back(i);
        }
    }
    return groups;
}

void shuffle_class(std::vector<std::size_t>& group, std::uint64_t seed, int cls,
                   std::uint64_t tag)
{
    rng::Stream stream(rng::derive_key({seed, tag, static_cast<std::uint64_t>(cls)}));
    rng::shuffle(group.begin(), group.end(), stream);
}

} // namespace

auto subsample_stratified(const Dataset& d, double fraction, std::uint64_t seed,
                          SubsampleReport* report) -> Dataset
{
    if (!(fraction > 0.0 && fraction <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "fraction must lie in (0, 1]");
    }
    if (d.labeled_count() != d.size()) {
        throw Error(ErrorCode::InvalidArgument, "stratified subsampling needs every label");
    }
    auto groups = positions_by_class(d);
    std::vector<std::size_t> chosen;
    for (int c = 0; c < kNumClasses; ++c) {
        auto& group = groups[static_cast<std::size_t>(c)];
        if (group.empty()) {
            continue;
        }
        const auto take =
            static_cast<std::size_t>(std::llround(fraction * static_cast<double>(group.size())));
        if (take == 0) {
            if (report != nullptr) {
                report->warnings.push_back("EmptyClass: class " + std::to_string(c) +
                                           " receives 0 samples");
            }
            continue;
        }
        shuffle_class(group, seed, c, 0x5355425341ULL);
        chosen.insert(chosen.end(), group.begin(), group.begin() + static_cast<std::ptrdiff_t>(take));
    }
    std::sort(chosen.begin(), chosen.end());
    return d.select(chosen);
}

auto strip_labels(const Dataset& d, double keep_fraction, std::uint64_t seed) -> Dataset
{
    if (!(keep_fraction >= 0.0 && keep_fraction <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "keep_fraction must lie in [0, 1]");
    }
    auto groups = positions_by_class(d);
    std::vector<std::optional<int>> labels(d.size());
    for (int c = 0; c < kNumClasses; ++c) {
        auto& group = groups[static_cast<std::size_t>(c)];
        const auto keep = static_cast<std::size_t>(
            std::llround(keep_fraction * static_cast<double>(group.size())));
        shuffle_class(group, seed, c, 0x5354524950ULL);
        for (std::size_t k = 0; k < keep; ++k) {
            labels[group[k]] = c;
        }
    }
    return d.with_labels(std::move(labels));
}

auto make_gaussian_blobs(std::size_t per_class, int classes, std::uint64_t seed) -> Dataset
{
    if (classes < 1 || classes > kNumClasses || per_class == 0) {
        throw Error(ErrorCode::InvalidArgument, "blob dataset needs 1..10 classes");
    }
    constexpr std::size_t side = kImageSide;
    const std::size_t n = per_class * static_cast<std::size_t>(classes);
    std::vector<float> pixels(n * side * side);
    std::vector<std::optional<int>> labels(n);
    std::vector<std::int64_t> ids(n);
    rng::Stream stream(rng::derive_key({seed, 0x424c4f42ULL}));
    for (std::size_t i = 0; i < n; ++i) {
        const int cls = static_cast<int>(i % static_cast<std::size_t>(classes));
        const double angle = 2.0 * std::numbers::pi * cls / classes + std::numbers::pi / 4.0;
        const double cx = 13.5 + 7.0 * std::cos(angle) + 1.2 * stream.normal();
        const double cy = 13.5 + 7.0 * std::sin(angle) + 1.2 * stream.normal();
        const double width = 2.5 + 0.3 * stream.normal();
        const double peak = 0.75 + 0.2 * stream.uniform();
        float* img = pixels.data() + i * side * side;
        for (std::size_t y = 0; y < side; ++y) {
            for (std::size_t x = 0; x < side; ++x) {
                const double dx = static_cast<double>(x) - cx;
                const double dy = static_cast<double>(y) - cy;
                const double v = peak * std::exp(-(dx * dx + dy * dy) / (2.0 * width * width));
                img[y * side + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }
        labels[i] = cls;
        ids[i] = static_cast<std::int64_t>(i);
    }
    return Dataset(side, side, std::move(pixels), std::move(labels), std::move(ids));
}

} // namespace lloom
