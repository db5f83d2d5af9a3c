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
#include "lloom/checkpoint.hpp"
#include "lloom/dataset.hpp"
#include "lloom/model.hpp"
#include "lloom/trainer.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace lloom {

struct Assignment {
    std::int64_t id = 0;
    int label = 0;

    friend auto operator==(const Assignment&, const Assignment&) -> bool = default;
};

struct AnnotationEvent {
    std::vector<Assignment> assignments;
    std::string source = "cli"; // ui | cli | oracle
    std::string timestamp;      // ISO 8601 UTC, filled in when empty

    friend auto operator==(const AnnotationEvent&, const AnnotationEvent&) -> bool = default;
};

struct AnnotationSummary {
    std::size_t accepted = 0;
    std::size_t relabeled = 0;
    std::size_t total_labeled = 0;
};

/// One line of the annotation log.
auto annotation_to_json(const AnnotationEvent& e) -> std::string;
/// Throws InvalidArgument on malformed text.
auto annotation_from_json(const std::string& line) -> AnnotationEvent;

/// Applies `log` in order on top of `initial`; the last assignment to an id
/// wins. Throws UnknownSampleId / ClassOutOfRange like apply_annotations.
auto replay_annotations(const Dataset& d, std::vector<std::optional<int>> initial,
                        const std::vector<AnnotationEvent>& log)
    -> std::vector<std::optional<int>>;

struct StreamEvent {
    enum class Kind { Epoch, Done, Error };
    Kind kind = Kind::Epoch;
    std::uint64_t cycle = 0;
    std::size_t epoch = 0;
    SnapshotPtr snapshot; // set for Epoch
    std::string message;  // set for Error
};

using EventChannel = BoundedChannel<StreamEvent>;

struct PointsView {
    SnapshotPtr snapshot;
    std::vector<std::optional<int>> labels; // per dataset position
};

struct SessionStatus {
    bool training = false;
    std::uint64_t cycle = 0;
    std::size_t epoch = 0;
    std::size_t labeled = 0;
    std::size_t n = 0;
    ModelConfig model;
    TrainConfig train;
};

/// The annotate / retrain loop around one dataset and one model.
///
/// Annotations may arrive at any time; a cycle trains on the labels present
/// when it was triggered. Each cycle warm-starts from the current weights
/// and Adam state. All public methods are safe to call from many threads.
class Session {
public:
    /// Default budget for one update cycle.
    static constexpr std::size_t kDefaultCycleEpochs = 5;
    /// beta_KL = 3, beta_classifier = 100: with unit weights a handful of
    /// labels is swamped by the per-image reconstruction sum.
    static constexpr LossWeights kDefaultCycleWeights{3.0, 100.0};
    static auto default_train_config() -> TrainConfig;

    Session(Dataset data, ModelConfig model, TrainConfig train, std::uint64_t seed);
    /// Starts from saved weights; the initial view embeds with them.
    Session(Dataset data, Checkpoint checkpoint, TrainConfig train);
    ~Session();

    Session(const Session&) = delete;
    auto operator=(const Session&) -> Session& = delete;

    /// Validates every assignment first; on any failure nothing changes.
    auto apply_annotations(AnnotationEvent event) -> AnnotationSummary;

    /// Starts a cycle on a background worker and returns its id. Throws
    /// AlreadyTraining while a cycle runs, InvalidArgument for a bad config.
    auto trigger_update(std::optional<TrainConfig> override = std::nullopt) -> std::uint64_t;

    /// Blocks until no cycle is running.
    void wait_idle();

    [[nodiscard]] auto current_points() const -> PointsView;
    [[nodiscard]] auto status() const -> SessionStatus;
    [[nodiscard]] auto labels() const -> std::vector<std::optional<int>>;
    [[nodiscard]] auto initial_labels() const -> std::vector<std::optional<int>>;
    [[nodiscard]] auto annotation_log() const -> std::vector<AnnotationEvent>;
    [[nodiscard]] auto dataset() const -> const Dataset& { return data_; }
    [[nodiscard]] auto model() const -> DgmModel<float>;
    [[nodiscard]] auto adam_state() const -> AdamState<float>;

    /// A channel that first receives the latest snapshot, then every new
    /// epoch, "done" and "error" event. Dropping the pointer unsubscribes.
    auto subscribe(std::size_t capacity = 64) -> std::shared_ptr<EventChannel>;

    /// Writes `dir`/checkpoint.bin, annotations.ndjson and config.json.
    void persist(const std::filesystem::path& dir) const;
    /// Rebuilds a session over `images` (labels are taken from the record).
    /// Throws IoError, CorruptLog (naming the bad record) or
    /// CorruptManifest.
    static auto restore(const std::filesystem::path& dir, const Dataset& images)
        -> std::unique_ptr<Session>;

private:
    // Caller holds mutex_, so subscribers see events in state order.
    void publish_locked(const StreamEvent& event, bool final);
    void run_cycle(std::uint64_t cycle, TrainConfig config, Dataset labeled,
                   DgmModel<float> model, AdamState<float> state);

    Dataset data_;
    std::uint64_t seed_ = 0;

    mutable std::mutex mutex_;
    DgmModel<float> model_;
    AdamState<float> adam_;
    TrainConfig train_;
    std::vector<std::optional<int>> initial_labels_;
    std::vector<std::optional<int>> labels_;
    std::vector<AnnotationEvent> log_;
    std::uint64_t cycle_ = 0;
    std::size_t epochs_completed_ = 0;
    bool training_ = false;
    std::condition_variable idle_;
    SnapshotPtr latest_;
    std::vector<std::weak_ptr<EventChannel>> subscribers_;

    std::mutex worker_mutex_;
    std::thread worker_;
    std::atomic<bool> stop_{false};
};

} // namespace lloom
