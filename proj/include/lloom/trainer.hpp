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

#include "lloom/adam.hpp"
#include "lloom/channel.hpp"
#include "lloom/dataset.hpp"
#include "lloom/model.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

namespace lloom {

struct TrainConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 128;
    double learning_rate = 5e-3;
    LossWeights weights;
    std::uint64_t seed = 42;
    std::size_t snapshot_every = 1;

    void validate() const;
    friend auto operator==(const TrainConfig&, const TrainConfig&) -> bool = default;
};

struct EpochSnapshot {
    std::uint64_t cycle = 0;
    std::size_t epoch = 0;
    LossBreakdown loss; // epoch mean
    Embedding points;
    double wall_time = 0.0; // seconds since the run started
};

/// NonFiniteLoss with the position where training stopped.
class TrainingDiverged : public Error {
public:
    TrainingDiverged(std::size_t epoch, std::size_t batch)
        : Error(ErrorCode::NonFiniteLoss, "loss is not finite at epoch " + std::to_string(epoch) +
                                              ", batch " + std::to_string(batch)),
          epoch_(epoch), batch_(batch)
    {}
    [[nodiscard]] auto epoch() const -> std::size_t { return epoch_; }
    [[nodiscard]] auto batch() const -> std::size_t { return batch_; }

private:
    std::size_t epoch_;
    std::size_t batch_;
};

using SnapshotPtr = std::shared_ptr<const EpochSnapshot>;
using SnapshotCallback = std::function<void(const SnapshotPtr&)>;

struct FitResult {
    std::vector<SnapshotPtr> snapshots;
    std::size_t epochs_run = 0;
};

/// Optional knobs for fit beyond TrainConfig.
struct FitOptions {
    std::uint64_t cycle = 0;
    /// Epoch numbering starts after this many completed epochs. A run split
    /// at epoch k resumes with first_epoch = k and the state saved there.
    std::size_t first_epoch = 0;
    SnapshotCallback on_epoch;
    /// When set, replaces the snapshot_every rule; the last epoch is always
    /// snapshotted.
    std::function<bool(std::size_t epoch)> snapshot_at;
    /// Polled between batches; returning true stops after the current epoch.
    std::function<bool()> stop_requested;
};

/// Trains `model` in place on `data`. Epoch e (1-based) shuffles with key
/// (seed, e) and draws batch noise from key (seed, e, batch). The state's
/// learning rate is set from `config`.
///
/// Throws EmptyDataset, or NonFiniteLoss naming the epoch and batch.
auto fit(DgmModel<float>& model, AdamState<float>& state, const Dataset& data,
         const TrainConfig& config, const FitOptions& options = {}) -> FitResult;

/// fit with the classifier weight forced to 0 and every label hidden, so
/// the head parameters are left exactly as they were.
auto pretrain_unsupervised(DgmModel<float>& model, AdamState<float>& state,
                           const Dataset& data, const TrainConfig& config,
                           const FitOptions& options = {}) -> FitResult;

/// The positions each epoch visits, in order.
auto epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch)
    -> std::vector<std::size_t>;

/// Standard normal noise [rows, dim] for one batch.
auto batch_noise(std::uint64_t seed, std::size_t epoch, std::size_t batch, std::size_t rows,
                 std::size_t dim) -> Tensor<float>;

using SnapshotChannel = BoundedChannel<SnapshotPtr>;

} // namespace lloom
