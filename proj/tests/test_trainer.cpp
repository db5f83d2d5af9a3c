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

#include "lloom/channel.hpp"
#include "lloom/checkpoint.hpp"
#include "lloom/trainer.hpp"

#include "support/data_dir.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <thread>

using namespace lloom;

namespace {

auto tiny_model() -> ModelConfig
{
    ModelConfig c;
    c.conv_channels = 4;
    c.dense_units = 16;
    return c;
}

auto tiny_train(std::size_t epochs) -> TrainConfig
{
    TrainConfig t;
    t.epochs = epochs;
    t.batch_size = 16;
    t.weights = {1.0, 10.0};
    t.seed = 11;
    return t;
}

auto temp_file(const std::string& name) -> std::filesystem::path
{
    return std::filesystem::temp_directory_path() / ("lloom_test_" + name);
}

template <class F>
void expect_code(ErrorCode code, F&& f)
{
    try {
        f();
        FAIL("expected " << to_string(code));
    } catch (const Error& e) {
        CHECK(e.code() == code);
    }
}

auto read_bytes(const std::filesystem::path& p) -> std::string
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& p, const std::string& s)
{
    std::ofstream(p, std::ios::binary).write(s.data(), static_cast<std::streamsize>(s.size()));
}

} // namespace

TEST_CASE("epoch order and noise are keyed by seed and epoch")
{
    const auto a = epoch_order(100, 5, 1);
    CHECK(a == epoch_order(100, 5, 1));
    CHECK(a != epoch_order(100, 5, 2));
    CHECK(a != epoch_order(100, 6, 1));
    auto sorted = a;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> iota(100);
    std::iota(iota.begin(), iota.end(), std::size_t{0});
    CHECK(sorted == iota);
    CHECK(batch_noise(5, 1, 0, 8, 2) == batch_noise(5, 1, 0, 8, 2));
    CHECK(!(batch_noise(5, 1, 0, 8, 2) == batch_noise(5, 1, 1, 8, 2)));
}

TEST_CASE("fit")
{
    const auto data = make_gaussian_blobs(10, 3, 1);

    SUBCASE("zero epochs changes nothing")
    {
        DgmModel<float> model(tiny_model(), 3);
        const auto before = model.params();
        auto state = AdamState<float>::for_params(model.params());
        const auto r = fit(model, state, data, tiny_train(0));
        CHECK(r.snapshots.empty());
        CHECK(r.epochs_run == 0);
        CHECK(model.params() == before);
    }
    SUBCASE("one snapshot per epoch, numbered from 1")
    {
        DgmModel<float> model(tiny_model(), 3);
        auto state = AdamState<float>::for_params(model.params());
        std::vector<std::size_t> seen;
        FitOptions opts;
        opts.on_epoch = [&](const SnapshotPtr& s) { seen.push_back(s->epoch); };
        const auto r = fit(model, state, data, tiny_train(50), opts);
        REQUIRE(r.snapshots.size() == 50);
        for (std::size_t e = 0; e < 50; ++e) {
            CHECK(r.snapshots[e]->epoch == e + 1);
            CHECK(seen[e] == e + 1);
            CHECK(r.snapshots[e]->points.size() == data.size());
        }
        CHECK(state.t == 50 * 2);
    }
    SUBCASE("snapshot_every keeps the last epoch")
    {
        DgmModel<float> model(tiny_model(), 3);
        auto state = AdamState<float>::for_params(model.params());
        auto cfg = tiny_train(7);
        cfg.snapshot_every = 3;
        const auto r = fit(model, state, data, cfg);
        REQUIRE(r.snapshots.size() == 3);
        CHECK(r.snapshots[0]->epoch == 3);
        CHECK(r.snapshots[1]->epoch == 6);
        CHECK(r.snapshots[2]->epoch == 7);
    }
    SUBCASE("stop request ends the run after the epoch")
    {
        DgmModel<float> model(tiny_model(), 3);
        auto state = AdamState<float>::for_params(model.params());
        FitOptions opts;
        opts.stop_requested = [] { return true; };
        opts.snapshot_at = [](std::size_t) { return false; };
        const auto r = fit(model, state, data, tiny_train(10), opts);
        CHECK(r.epochs_run == 1);
        REQUIRE(r.snapshots.size() == 1);
        CHECK(r.snapshots[0]->epoch == 1);
    }
    SUBCASE("errors")
    {
        DgmModel<float> model(tiny_model(), 3);
        auto state = AdamState<float>::for_params(model.params());
        expect_code(ErrorCode::EmptyDataset, [&] { (void)fit(model, state, Dataset(), tiny_train(1)); });
        auto bad = tiny_train(1);
        bad.batch_size = 0;
        expect_code(ErrorCode::InvalidArgument, [&] { (void)fit(model, state, data, bad); });
        bad = tiny_train(1);
        bad.weights.beta_kl = -1.0;
        expect_code(ErrorCode::InvalidArgument, [&] { (void)fit(model, state, data, bad); });
    }
    SUBCASE("divergence names the epoch")
    {
        DgmModel<float> model(tiny_model(), 3);
        auto state = AdamState<float>::for_params(model.params());
        auto cfg = tiny_train(20);
        cfg.learning_rate = 1e30;
        try {
            (void)fit(model, state, data, cfg);
            FAIL("expected divergence");
        } catch (const TrainingDiverged& e) {
            CHECK(e.code() == ErrorCode::NonFiniteLoss);
            CHECK(e.epoch() >= 1);
            CHECK(e.epoch() <= 20);
        }
    }
}

TEST_CASE("smoke run lowers the loss")
{
    const auto data = make_gaussian_blobs(10, 10, 7);
    REQUIRE(data.size() == 100);
    DgmModel<float> model(ModelConfig{}, 7);
    auto state = AdamState<float>::for_params(model.params());
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.seed = 7;
    const auto r = fit(model, state, data, cfg);
    REQUIRE(r.snapshots.size() == 5);
    const double first = r.snapshots.front()->loss.total;
    const double last = r.snapshots.back()->loss.total;
    CHECK(last < first);
    // Golden values from the first verified run.
    CHECK(first == doctest::Approx(546.401).epsilon(1e-4));
    CHECK(last == doctest::Approx(431.529).epsilon(1e-4));
}

TEST_CASE("unsupervised pretraining")
{
    const auto data = make_gaussian_blobs(12, 3, 2);
    auto run = [&] {
        DgmModel<float> model(tiny_model(), 5);
        auto state = AdamState<float>::for_params(model.params());
        (void)pretrain_unsupervised(model, state, data, tiny_train(4));
        return model;
    };
    const DgmModel<float> fresh(tiny_model(), 5);
    const auto a = run();
    const auto b = run();
    CHECK(a.params().with_prefix(kClassifierPrefix) == fresh.params().with_prefix(kClassifierPrefix));
    CHECK(a.params() == b.params());
    CHECK(!(a.params().with_prefix(kEncoderPrefix) == fresh.params().with_prefix(kEncoderPrefix)));
}

TEST_CASE("pretraining on MNIST beats the untrained reconstruction")
{
    const auto dir = test::mnist_dir();
    if (!dir) {
        MESSAGE("MNIST not found; set LLOOM_DATA_DIR");
        return;
    }
    auto data = subsample_stratified(load_mnist(*dir), 0.01, 42);
    DgmModel<float> model(ModelConfig{}, 42);
    auto state = AdamState<float>::for_params(model.params());
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.weights = {3.0, 0.0};
    const auto r = pretrain_unsupervised(model, state, data, cfg);
    const double baseline = 784.0 * std::log(2.0);
    CHECK(r.snapshots.back()->loss.reconstruction < 0.5 * baseline);
}

TEST_CASE("checkpoint")
{
    const auto data = make_gaussian_blobs(8, 2, 3);
    DgmModel<float> model(tiny_model(), 9);
    auto state = AdamState<float>::for_params(model.params());
    auto cfg = tiny_train(2);
    (void)fit(model, state, data, cfg);
    Checkpoint ck{model.config(), cfg, model.params(), state, 2, 3};
    const auto path = temp_file("ckpt.bin");
    save_checkpoint(ck, path);

    SUBCASE("round trip is bitwise")
    {
        const auto back = load_checkpoint(path);
        CHECK(back.params == ck.params);
        CHECK(back.adam.m == ck.adam.m);
        CHECK(back.adam.v == ck.adam.v);
        CHECK(back.adam.t == ck.adam.t);
        CHECK(back.model == ck.model);
        CHECK(back.train == ck.train);
        CHECK(back.epochs_completed == 2);
        CHECK(back.cycle == 3);
        CHECK(!std::filesystem::exists(path.string() + ".tmp"));
    }
    SUBCASE("damage is detected")
    {
        const auto bytes = read_bytes(path);
        const auto bad = temp_file("ckpt_bad.bin");
        for (std::size_t keep : {std::size_t{0}, std::size_t{5}, std::size_t{30}, bytes.size() / 2,
                                 bytes.size() - 1}) {
            write_bytes(bad, bytes.substr(0, keep));
            expect_code(ErrorCode::CorruptManifest, [&] { (void)load_checkpoint(bad); });
        }
        auto magic = bytes;
        magic[0] = 'X';
        write_bytes(bad, magic);
        expect_code(ErrorCode::CorruptManifest, [&] { (void)load_checkpoint(bad); });
        auto version = bytes;
        version[8] = 2;
        write_bytes(bad, version);
        expect_code(ErrorCode::VersionMismatch, [&] { (void)load_checkpoint(bad); });
        write_bytes(bad, bytes + "extra");
        expect_code(ErrorCode::CorruptManifest, [&] { (void)load_checkpoint(bad); });
        std::filesystem::remove(bad);
        expect_code(ErrorCode::IoError, [&] { (void)load_checkpoint(temp_file("missing.bin")); });
    }
    SUBCASE("a run split across a checkpoint equals the unsplit run")
    {
        DgmModel<float> whole(tiny_model(), 9);
        auto whole_state = AdamState<float>::for_params(whole.params());
        (void)fit(whole, whole_state, data, tiny_train(5));

        const auto back = load_checkpoint(path);
        DgmModel<float> resumed(back.model, back.params);
        auto resumed_state = back.adam;
        FitOptions opts;
        opts.first_epoch = back.epochs_completed;
        (void)fit(resumed, resumed_state, data, tiny_train(3), opts);

        CHECK(resumed.params() == whole.params());
        CHECK(resumed_state.m == whole_state.m);
        CHECK(resumed_state.v == whole_state.v);
        CHECK(resumed_state.t == whole_state.t);
    }
    std::filesystem::remove(path);
}

TEST_CASE("bounded channel")
{
    SUBCASE("drops the oldest intermediate items, never finals")
    {
        BoundedChannel<int> ch(3);
        for (int i = 1; i <= 6; ++i) {
            ch.push(i, i == 6);
        }
        CHECK(ch.dropped() == 3);
        std::vector<int> got;
        while (auto v = ch.try_pop()) {
            got.push_back(*v);
        }
        CHECK(got == std::vector<int>{4, 5, 6});
    }
    SUBCASE("close wakes blocked readers after draining")
    {
        BoundedChannel<int> ch(4);
        std::thread t([&] {
            ch.push(1);
            ch.close();
        });
        CHECK(ch.pop() == 1);
        CHECK(!ch.pop().has_value());
        t.join();
        CHECK(ch.closed());
    }
    SUBCASE("pop_for times out")
    {
        BoundedChannel<int> ch(4);
        CHECK(!ch.pop_for(std::chrono::milliseconds(5)).has_value());
    }
}
