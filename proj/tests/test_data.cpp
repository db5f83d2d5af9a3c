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
#include "lloom/idx.hpp"

#include "support/data_dir.hpp"

#include <doctest.h>

#include <zlib.h>

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <set>

using namespace lloom;

namespace {

auto header(std::array<std::uint8_t, 4> magic, std::vector<std::uint32_t> dims)
    -> std::vector<std::uint8_t>
{
    std::vector<std::uint8_t> out(magic.begin(), magic.end());
    for (auto d : dims) {
        for (int s = 24; s >= 0; s -= 8) {
            out.push_back(static_cast<std::uint8_t>((d >> s) & 0xffU));
        }
    }
    return out;
}

template <class E>
void expect_code(ErrorCode code, E&& f)
{
    try {
        f();
        FAIL("expected " << to_string(code));
    } catch (const Error& e) {
        CHECK(e.code() == code);
    }
}

/// Independent reading of the container: big-endian dims after the magic.
struct RefIdx {
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> payload;
};

auto reference_parse(const std::vector<std::uint8_t>& b) -> RefIdx
{
    RefIdx r;
    const std::size_t n = b[3];
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t o = 4 + 4 * i;
        r.dims.push_back((std::uint32_t{b[o]} << 24U) | (std::uint32_t{b[o + 1]} << 16U) |
                         (std::uint32_t{b[o + 2]} << 8U) | std::uint32_t{b[o + 3]});
    }
    r.payload.assign(b.begin() + static_cast<std::ptrdiff_t>(4 + 4 * n), b.end());
    return r;
}

auto slurp(const std::filesystem::path& p) -> std::vector<std::uint8_t>
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

auto temp_dir(const std::string& name) -> std::filesystem::path
{
    auto dir = std::filesystem::temp_directory_path() / ("lloom_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

auto balanced(std::size_t per_class) -> Dataset
{
    const std::size_t n = per_class * 10;
    std::vector<float> px(n * 4, 0.5F);
    std::vector<std::optional<int>> labels;
    std::vector<std::int64_t> ids;
    for (std::size_t i = 0; i < n; ++i) {
        labels.emplace_back(static_cast<int>(i % 10));
        ids.push_back(static_cast<std::int64_t>(i));
    }
    return Dataset(2, 2, std::move(px), std::move(labels), std::move(ids));
}

} // namespace

TEST_CASE("IDX parsing")
{
    SUBCASE("image file")
    {
        auto bytes = header({0, 0, 8, 3}, {2, 28, 28});
        for (std::size_t i = 0; i < 1568; ++i) {
            bytes.push_back(static_cast<std::uint8_t>(i % 251));
        }
        const auto f = parse_idx(bytes);
        CHECK(f.magic == kIdxImageMagic);
        CHECK(f.count() == 2);
        CHECK(f.dims == std::vector<std::uint32_t>{2, 28, 28});
        CHECK(f.payload.size() == 1568);
        CHECK(serialize_idx(f) == bytes);
    }
    SUBCASE("label file")
    {
        auto bytes = header({0, 0, 8, 1}, {5});
        for (std::uint8_t v : {3, 1, 4, 1, 5}) {
            bytes.push_back(v);
        }
        const auto f = parse_idx(bytes);
        CHECK(f.magic == kIdxLabelMagic);
        CHECK(f.count() == 5);
        CHECK(f.payload == std::vector<std::uint8_t>{3, 1, 4, 1, 5});
    }
    SUBCASE("errors")
    {
        expect_code(ErrorCode::BadMagic, [] { (void)parse_idx(header({0, 0, 7, 3}, {1, 1, 1})); });
        expect_code(ErrorCode::BadMagic, [] { (void)parse_idx(header({1, 0, 8, 3}, {1, 1, 1})); });
        expect_code(ErrorCode::Truncated, [] {
            const std::vector<std::uint8_t> b{0, 0};
            (void)parse_idx(b);
        });
        expect_code(ErrorCode::Truncated, [] {
            auto b = header({0, 0, 8, 3}, {1, 28, 28});
            b.resize(10);
            (void)parse_idx(b);
        });
        expect_code(ErrorCode::Truncated, [] {
            auto b = header({0, 0, 8, 1}, {5});
            b.push_back(1);
            (void)parse_idx(b);
        });
        expect_code(ErrorCode::CountMismatch, [] {
            auto b = header({0, 0, 8, 1}, {2});
            b.insert(b.end(), {1, 2, 3});
            (void)parse_idx(b);
        });
    }
}

TEST_CASE("dataset assembly")
{
    auto images = parse_idx([] {
        auto b = header({0, 0, 8, 3}, {3, 2, 2});
        b.insert(b.end(), {0, 255, 51, 102, 0, 0, 0, 0, 255, 255, 255, 255});
        return b;
    }());
    auto labels = parse_idx([] {
        auto b = header({0, 0, 8, 1}, {3});
        b.insert(b.end(), {3, 0, 9});
        return b;
    }());
    const auto d = load_dataset(images, labels);
    CHECK(d.size() == 3);
    CHECK(d.image(0)[0] == 0.0F);
    CHECK(d.image(0)[1] == 1.0F);
    CHECK(d.image(0)[2] == doctest::Approx(0.2));
    CHECK(d.label(0) == 3);
    CHECK(d.id(2) == 2);
    const auto oh = d.one_hot();
    for (std::size_t k = 0; k < 10; ++k) {
        CHECK(oh.at(0, k) == (k == 3 ? 1.0F : 0.0F));
    }
    const auto [img2, lab2] = to_idx(d);
    CHECK(serialize_idx(img2) == serialize_idx(images));
    CHECK(serialize_idx(lab2) == serialize_idx(labels));

    SUBCASE("mismatched files")
    {
        auto short_labels = labels;
        short_labels.dims[0] = 2;
        short_labels.payload.pop_back();
        expect_code(ErrorCode::CountMismatch, [&] { (void)load_dataset(images, short_labels); });
        expect_code(ErrorCode::BadMagic, [&] { (void)load_dataset(labels, labels); });
        auto bad = labels;
        bad.payload[1] = 10;
        expect_code(ErrorCode::LabelOutOfRange, [&] { (void)load_dataset(images, bad); });
    }
    SUBCASE("files on disk, plain and gzip")
    {
        const auto dir = temp_dir("idx");
        {
            std::ofstream(dir / "train-images-idx3-ubyte", std::ios::binary)
                .write(reinterpret_cast<const char*>(serialize_idx(images).data()),
                       static_cast<std::streamsize>(serialize_idx(images).size()));
            const auto lb = serialize_idx(labels);
            gzFile gz = gzopen((dir / "train-labels-idx1-ubyte.gz").c_str(), "wb");
            gzwrite(gz, lb.data(), static_cast<unsigned>(lb.size()));
            gzclose(gz);
        }
        const auto loaded = load_mnist(dir);
        CHECK(loaded.size() == 3);
        CHECK(loaded.labels() == d.labels());
        std::filesystem::remove(dir / "train-labels-idx1-ubyte.gz");
        expect_code(ErrorCode::IoError, [&] { (void)load_mnist(dir); });
        std::filesystem::remove_all(dir);
    }
}

TEST_CASE("stratified subsampling")
{
    const auto d = balanced(20);
    SUBCASE("fraction 1 keeps every id")
    {
        const auto s = subsample_stratified(d, 1.0, 42);
        CHECK(s.sample_ids() == d.sample_ids());
    }
    SUBCASE("deterministic and stratified")
    {
        const auto a = subsample_stratified(d, 0.25, 42);
        const auto b = subsample_stratified(d, 0.25, 42);
        CHECK(a.sample_ids() == b.sample_ids());
        CHECK(a.size() == 50);
        std::map<int, int> per;
        for (const auto& l : a.labels()) {
            ++per[*l];
        }
        for (const auto& [k, v] : per) {
            CHECK(v == 5);
        }
        CHECK(std::is_sorted(a.sample_ids().begin(), a.sample_ids().end()));
        const auto c = subsample_stratified(d, 0.25, 43);
        CHECK(c.sample_ids() != a.sample_ids());
    }
    SUBCASE("classes that round to zero are reported")
    {
        SubsampleReport report;
        const auto s = subsample_stratified(d, 0.02, 1, &report);
        CHECK(s.empty());
        CHECK(report.warnings.size() == 10);
    }
    SUBCASE("bad fraction")
    {
        expect_code(ErrorCode::InvalidArgument, [&] { (void)subsample_stratified(d, 0.0, 1); });
        expect_code(ErrorCode::InvalidArgument, [&] { (void)subsample_stratified(d, 1.5, 1); });
    }
}

TEST_CASE("label stripping")
{
    const auto d = balanced(10);
    CHECK(strip_labels(d, 1.0, 3).labeled_count() == 100);
    CHECK(strip_labels(d, 0.0, 3).labeled_count() == 0);
    const auto half = strip_labels(d, 0.5, 3);
    CHECK(half.labeled_count() == 50);
    CHECK(strip_labels(d, 0.5, 3).labels() == half.labels());
    CHECK(half.sample_ids() == d.sample_ids());
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (half.label(i)) {
            CHECK(half.label(i) == d.label(i));
        }
    }
}

TEST_CASE("gaussian blobs")
{
    const auto a = make_gaussian_blobs(25, 2, 7);
    CHECK(a.size() == 50);
    CHECK(a.labeled_count() == 50);
    CHECK(make_gaussian_blobs(25, 2, 7).pixels().size() == a.pixels().size());
    const auto px = a.pixels();
    CHECK(std::all_of(px.begin(), px.end(), [](float v) { return v >= 0.0F && v <= 1.0F; }));
}

TEST_CASE("official MNIST files")
{
    const auto dir = test::mnist_dir();
    if (!dir) {
        MESSAGE("MNIST not found; set LLOOM_DATA_DIR");
        return;
    }
    const auto img_bytes = slurp(*dir / "train-images-idx3-ubyte");
    const auto lab_bytes = slurp(*dir / "train-labels-idx1-ubyte");
    if (img_bytes.empty() || lab_bytes.empty()) {
        MESSAGE("uncompressed MNIST files not found");
        return;
    }
    const auto ref_img = reference_parse(img_bytes);
    const auto ref_lab = reference_parse(lab_bytes);
    const auto img = parse_idx(img_bytes);
    const auto lab = parse_idx(lab_bytes);
    CHECK(img.dims == ref_img.dims);
    CHECK(img.dims == std::vector<std::uint32_t>{60000, 28, 28});
    CHECK(img.payload == ref_img.payload);
    CHECK(lab.payload == ref_lab.payload);

    const auto d = load_mnist(*dir);
    REQUIRE(d.size() == 60000);
    CHECK(d.label(0) == 5);
    std::array<std::size_t, 10> counts{};
    for (const auto& l : d.labels()) {
        ++counts[static_cast<std::size_t>(*l)];
    }
    const std::array<std::size_t, 10> known{5923, 6742, 5958, 6131, 5842,
                                            5421, 5918, 6265, 5851, 5949};
    CHECK(counts == known);

    std::size_t expected = 0;
    for (auto c : counts) {
        expected += static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(c)));
    }
    const auto s = subsample_stratified(d, 0.1, 42);
    CHECK(s.size() == expected);
    CHECK(s.size() == 6000);
    CHECK(subsample_stratified(d, 0.1, 42).sample_ids() == s.sample_ids());
    std::set<std::int64_t> unique(s.sample_ids().begin(), s.sample_ids().end());
    CHECK(unique.size() == s.size());
}
