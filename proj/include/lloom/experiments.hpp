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

#include "lloom/dataset.hpp"
#include "lloom/metrics.hpp"
#include "lloom/model.hpp"
#include "lloom/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lloom {

inline constexpr const char* kVersion = "0.1.0";

struct BranchSpec {
    std::string name;
    std::size_t hidden_layers = 0;
    LossWeights weights;
    std::size_t epochs = 50;
    /// Epochs whose embeddings are kept in addition to the final one. 0
    /// means the branch's starting point.
    std::vector<std::size_t> snapshot_epochs;
    /// Start from the shared pretrained encoder/decoder rather than a
    /// fresh initialisation.
    bool from_pretrain = true;
};

struct ExperimentSpec {
    std::string panel = "custom";
    std::size_t pretrain_epochs = 50;
    LossWeights pretrain_weights{3.0, 0.0};
    std::vector<BranchSpec> branches;
    std::uint64_t seed = 42;
    ModelConfig model;
    std::size_t batch_size = 128;
    double learning_rate = 5e-3;
    /// Fraction of samples that keep their labels during fine-tuning.
    double labeled_fraction = 1.0;

    void validate() const;
};

auto fig2a_spec(std::uint64_t seed) -> ExperimentSpec;
/// The logreg branch of fig2a with embeddings kept at 0, 5, 15, 30, 50.
auto fig2b_spec(std::uint64_t seed) -> ExperimentSpec;
auto fig2c_spec(std::uint64_t seed) -> ExperimentSpec;
/// Fresh-initialised runs with no classifier term: one at `beta_kl` and a
/// control at 0.
auto collapse_spec(std::uint64_t seed, double beta_kl = 1000.0) -> ExperimentSpec;
auto spec_for_panel(const std::string& panel, std::uint64_t seed) -> ExperimentSpec;

/// Rescales every epoch count (and snapshot epoch) by `pretrain / 50` and
/// `fine / 50`, for smoke runs of the full grids.
auto with_epochs(ExperimentSpec spec, std::size_t pretrain_epochs, std::size_t fine_epochs)
    -> ExperimentSpec;

struct DataSpec {
    std::filesystem::path data_dir;
    double fraction = 0.1;
    std::uint64_t subsample_seed = 42;
    /// Cap on the sample count after subsampling (0 keeps all), taken as a
    /// stratified subset so smoke runs stay balanced.
    std::size_t max_samples = 0;
};

auto load_experiment_data(const DataSpec& spec, SubsampleReport* report = nullptr) -> Dataset;

struct Pretrained {
    DgmModel<float> model;
    Embedding embedding;
    SeparationMetrics metrics;
    std::size_t epochs = 0;
    LossWeights weights;
    std::uint64_t seed = 0;
};

struct BranchResult {
    std::string name;
    Embedding final;
    std::map<std::size_t, Embedding> snapshots;
    SeparationMetrics metrics;
    LossBreakdown last_loss;
};

struct ExperimentResult {
    ExperimentSpec spec;
    std::optional<Pretrained> pretrained;
    std::vector<BranchResult> branches;

    [[nodiscard]] auto branch(const std::string& name) const -> const BranchResult&;
};

using ProgressLog = std::function<void(const std::string&)>;

/// Unsupervised pretraining shared by every from_pretrain branch.
auto pretrain(const Dataset& data, const ExperimentSpec& spec, const ProgressLog& log = {})
    -> Pretrained;

/// Runs every branch. A branch with epochs = 0 reports its starting point.
/// `shared` is reused when it matches the spec's pretrain settings.
auto run_experiment(const Dataset& data, const ExperimentSpec& spec,
                    const Pretrained* shared = nullptr, const ProgressLog& log = {})
    -> ExperimentResult;

/// Mean Euclidean distance between matching mu rows.
auto mean_displacement(const Embedding& a, const Embedding& b) -> double;

auto manifest_json(const ExperimentResult& result, const DataSpec& data,
                   std::size_t sample_count) -> nlohmann::json;

/// Writes manifest.json and one directory per branch with embedding.csv,
/// metrics.json, scatter.svg and epoch_NNN.csv for kept snapshots.
void write_experiment(const ExperimentResult& result, const Dataset& data, const DataSpec& spec,
                      const std::filesystem::path& out_dir);

} // namespace lloom
