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

#include "lloom/trainer.hpp"

#include "lloom/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace lloom {

namespace {

constexpr std::uint64_t kShuffleTag = 0x53485546ULL;
constexpr std::uint64_t kNoiseTag = 0x4e4f4953ULL;

struct LossAccumulator {
    double total = 0.0;
    double reconstruction = 0.0;
    double kl = 0.0;
    double classifier = 0.0;
    std::size_t labeled = 0;
    std::size_t rows = 0;

    void add(const LossBreakdown& l, std::size_t batch_rows)
    {
        const auto w = static_cast<double>(batch_rows);
        total += w * l.total;
        reconstruction += w * l.reconstruction;
        kl += w * l.kl;
        classifier += w * l.classifier;
        labeled += l.labeled_count;
        rows += batch_rows;
    }

    [[nodiscard]] auto mean() const -> LossBreakdown
    {
        const auto n = static_cast<double>(std::max<std::size_t>(rows, 1));
        return {total / n, reconstruction / n, kl / n, classifier / n, labeled};
    }
};

} // namespace

void TrainConfig::validate() const
{
    if (batch_size == 0) {
        throw Error(ErrorCode::InvalidArgument, "batch_size must be at least 1");
    }
    if (snapshot_every == 0) {
        throw Error(ErrorCode::InvalidArgument, "snapshot_every must be at least 1");
    }
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw Error(ErrorCode::InvalidArgument, "learning_rate must be positive");
    }
    if (!(weights.beta_kl >= 0.0) || !(weights.beta_classifier >= 0.0) ||
        !std::isfinite(weights.beta_kl) || !std::isfinite(weights.beta_classifier)) {
        throw Error(ErrorCode::InvalidArgument, "loss weights must be finite and non-negative");
    }
}

auto epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch)
    -> std::vector<std::size_t>
{
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng::Stream stream(rng::derive_key({seed, kShuffleTag, epoch}));
    rng::shuffle(order.begin(), order.end(), stream);
    return order;
}

auto batch_noise(std::uint64_t seed, std::size_t epoch, std::size_t batch, std::size_t rows,
                 std::size_t dim) -> Tensor<float>
{
    Tensor<float> eps({rows, dim});
    rng::Stream stream(rng::derive_key({seed, kNoiseTag, epoch, batch}));
    for (auto& v : eps.data()) {
        v = static_cast<float>(stream.normal());
    }
    return eps;
}

auto fit(DgmModel<float>& model, AdamState<float>& state, const Dataset& data,
         const TrainConfig& config, const FitOptions& options) -> FitResult
{
    config.validate();
    if (data.empty()) {
        throw Error(ErrorCode::EmptyDataset, "cannot train on an empty dataset");
    }
    if (state.m.size() != model.params().size()) {
        state = AdamState<float>::for_params(model.params(), state.hyper);
    }
    state.hyper.lr = config.learning_rate;

    const auto started = std::chrono::steady_clock::now();
    const std::size_t last_epoch = options.first_epoch + config.epochs;
    FitResult result;
    ParamStore<float> grads;
    std::vector<std::size_t> positions;

    for (std::size_t epoch = options.first_epoch + 1; epoch <= last_epoch; ++epoch) {
        const auto order = epoch_order(data.size(), config.seed, epoch);
        LossAccumulator acc;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            positions.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
            const auto batch = make_batch<float>(data, positions);
            const auto eps = batch_noise(config.seed, epoch, batch_index, positions.size(),
                                         model.config().latent_dim);
            LossBreakdown loss;
            try {
                loss = model.total_loss(batch, config.weights, eps, &grads);
            } catch (const Error& e) {
                if (e.code() == ErrorCode::NonFinite || e.code() == ErrorCode::NonFiniteLoss) {
                    throw TrainingDiverged(epoch, batch_index);
                }
                throw;
            }
            adam_step(model.params(), grads, state);
            acc.add(loss, positions.size());
        }
        ++result.epochs_run;

        const bool stopping = options.stop_requested && options.stop_requested();
        const bool wanted = options.snapshot_at ? options.snapshot_at(epoch)
                                                : epoch % config.snapshot_every == 0;
        if (wanted || epoch == last_epoch || stopping) {
            auto snap = std::make_shared<EpochSnapshot>();
            snap->cycle = options.cycle;
            snap->epoch = epoch;
            snap->loss = acc.mean();
            snap->points = model.embed_means(data);
            snap->wall_time =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
            SnapshotPtr frozen = std::move(snap);
            if (options.on_epoch) {
                options.on_epoch(frozen);
            }
            result.snapshots.push_back(std::move(frozen));
        }
        if (stopping) {
            break;
        }
    }
    return result;
}

auto pretrain_unsupervised(DgmModel<float>& model, AdamState<float>& state, const Dataset& data,
                           const TrainConfig& config, const FitOptions& options) -> FitResult
{
    TrainConfig unsupervised = config;
    unsupervised.weights.beta_classifier = 0.0;
    const Dataset unlabeled =
        data.with_labels(std::vector<std::optional<int>>(data.size(), std::nullopt));
    const ParamStore<float> head = model.params().with_prefix(kClassifierPrefix);
    // Carried-over Adam moments still nudge the head; put it back.
    auto result = fit(model, state, unlabeled, unsupervised, options);
    for (const auto& e : head) {
        model.params().assign(e.name, e.value);
    }
    return result;
}

} // namespace lloom
