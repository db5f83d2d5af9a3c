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

#include "lloom/idx.hpp"
#include "lloom/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace lloom {

inline constexpr int kNumClasses = 10;
inline constexpr std::size_t kImageSide = 28;

/// Images in [0,1] with an optional label per sample. Missing labels are
/// std::nullopt; there is no sentinel class.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::size_t rows, std::size_t cols, std::vector<float> pixels,
            std::vector<std::optional<int>> labels, std::vector<std::int64_t> sample_ids);

    [[nodiscard]] auto size() const -> std::size_t { return ids_.size(); }
    [[nodiscard]] auto empty() const -> bool { return ids_.empty(); }
    [[nodiscard]] auto rows() const -> std::size_t { return rows_; }
    [[nodiscard]] auto cols() const -> std::size_t { return cols_; }
    [[nodiscard]] auto pixels_per_image() const -> std::size_t { return rows_ * cols_; }

    [[nodiscard]] auto pixels() const -> std::span<const float> { return pixels_; }
    [[nodiscard]] auto image(std::size_t i) const -> std::span<const float>;
    [[nodiscard]] auto labels() const -> const std::vector<std::optional<int>>& { return labels_; }
    [[nodiscard]] auto label(std::size_t i) const -> std::optional<int> { return labels_[i]; }
    [[nodiscard]] auto sample_ids() const -> const std::vector<std::int64_t>& { return ids_; }
    [[nodiscard]] auto id(std::size_t i) const -> std::int64_t { return ids_[i]; }
    [[nodiscard]] auto index_of(std::int64_t id) const -> std::optional<std::size_t>;

    [[nodiscard]] auto labeled_count() const -> std::size_t;
    /// 1 where a label is present.
    [[nodiscard]] auto presence_mask() const -> std::vector<unsigned char>;
    /// [N, 10]; all-zero rows where the label is absent.
    [[nodiscard]] auto one_hot() const -> Tensor<float>;

    /// Same images, replaced label column.
    [[nodiscard]] auto with_labels(std::vector<std::optional<int>> labels) const -> Dataset;
    /// Rows at the given positions, in that order.
    [[nodiscard]] auto select(std::span<const std::size_t> positions) const -> Dataset;

    /// Batch of images as [B, 1, rows, cols].
    template <class T>
    [[nodiscard]] auto image_batch(std::span<const std::size_t> positions) const -> Tensor<T>;

private:
    std::size_t rows_ = kImageSide;
    std::size_t cols_ = kImageSide;
    std::vector<float> pixels_;
    std::vector<std::optional<int>> labels_;
    std::vector<std::int64_t> ids_;
    std::unordered_map<std::int64_t, std::size_t> id_index_;
};

/// Pairs an image file with a label file; pixels are byte/255, ids are
/// the file positions.
auto load_dataset(const RawIdxFile& image_file, const RawIdxFile& label_file) -> Dataset;

/// Loads `<split>-images-idx3-ubyte[.gz]` and `<split>-labels-idx1-ubyte[.gz]`.
auto load_mnist(const std::filesystem::path& dir, const std::string& split = "train")
    -> Dataset;

/// Inverse of load_dataset for fully labeled sets (absent labels are an
/// error), used to round-trip datasets through the container format.
auto to_idx(const Dataset& d) -> std::pair<RawIdxFile, RawIdxFile>;

struct SubsampleReport {
    std::vector<std::string> warnings;
};

/// Per class, keeps round(fraction * class_count) samples chosen under
/// `seed`. Output keeps the input order. Classes that round to zero are
/// reported in `report` (EmptyClass) and skipped.
auto subsample_stratified(const Dataset& d, double fraction, std::uint64_t seed,
                          SubsampleReport* report = nullptr) -> Dataset;

/// Keeps labels on a stratified `keep_fraction` of the labeled samples.
auto strip_labels(const Dataset& d, double keep_fraction, std::uint64_t seed) -> Dataset;

/// Synthetic image set: one Gaussian bump per class at a class-specific
/// location, with jittered centre, width and intensity. Fully labeled.
auto make_gaussian_blobs(std::size_t per_class, int classes, std::uint64_t seed) -> Dataset;

} // namespace lloom
