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

#include "lloom/experiments.hpp"

#include "lloom/json_io.hpp"
#include "lloom/report.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <set>

namespace lloom {

namespace {

auto branch(std::string name, std::size_t hidden, LossWeights w, std::size_t epochs = 50,
            std::vector<std::size_t> snaps = {}) -> BranchSpec
{
    return {std::move(name), hidden, w, epochs, std::move(snaps), true};
}

auto scaled(std::size_t value, std::size_t to, std::size_t from)
{
    if (from == 0) {
        return value;
    }
    return static_cast<std::size_t>(std::llround(static_cast<double>(value) *
                                                 static_cast<double>(to) /
                                                 static_cast<double>(from)));
}

auto epoch_file(std::size_t epoch) -> std::string
{
    std::array<char, 32> buf{};
    std::snprintf(buf.data(), buf.size(), "epoch_%03zu.csv", epoch);
    return buf.data();
}

} // namespace

void ExperimentSpec::validate() const
{
    std::set<std::string> names;
    for (const auto& b : branches) {
        if (b.name.empty() || !names.insert(b.name).second) {
            throw Error(ErrorCode::InvalidArgument, "branch names must be unique and non-empty");
        }
        for (auto e : b.snapshot_epochs) {
            if (e > b.epochs) {
                throw Error(ErrorCode::InvalidArgument, "snapshot epoch " + std::to_string(e) +
                                                            " beyond branch " + b.name);
            }
        }
        if (!(b.weights.beta_kl >= 0.0) || !(b.weights.beta_classifier >= 0.0)) {
            throw Error(ErrorCode::InvalidArgument, "negative loss weight in " + b.name);
        }
    }
    if (!(labeled_fraction >= 0.0 && labeled_fraction <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "labeled_fraction must lie in [0, 1]");
    }
    model.validate();
}

auto fig2a_spec(std::uint64_t seed) -> ExperimentSpec
{
    ExperimentSpec s;
    s.panel = "fig2a";
    s.seed = seed;
    s.branches = {branch("none", 0, {3.0, 100.0}, 0),
                  branch("logreg", 0, {3.0, 100.0}),
                  branch("mlp2", 2, {3.0, 100.0})};
    return s;
}

auto fig2b_spec(std::uint64_t seed) -> ExperimentSpec
{
    ExperimentSpec s = fig2a_spec(seed);
    s.panel = "fig2b";
    s.branches.resize(2);
    s.branches[1].snapshot_epochs = {0, 5, 15, 30, 50};
    return s;
}

auto fig2c_spec(std::uint64_t seed) -> ExperimentSpec
{
    ExperimentSpec s;
    s.panel = "fig2c";
    s.seed = seed;
    s.branches = {branch("neutral", 0, {1.0, 1.0}),
                  branch("high_kl", 0, {10.0, 1.0}),
                  branch("high_classifier", 0, {1.0, 100.0})};
    return s;
}

auto collapse_spec(std::uint64_t seed, double beta_kl) -> ExperimentSpec
{
    ExperimentSpec s;
    s.panel = "collapse";
    s.seed = seed;
    s.pretrain_epochs = 0;
    s.branches = {branch("collapse", 0, {beta_kl, 0.0}), branch("control", 0, {0.0, 0.0})};
    for (auto& b : s.branches) {
        b.from_pretrain = false;
    }
    return s;
}

auto spec_for_panel(const std::string& panel, std::uint64_t seed) -> ExperimentSpec
{
    if (panel == "fig2a") {
        return fig2a_spec(seed);
    }
    if (panel == "fig2b") {
        return fig2b_spec(seed);
    }
    if (panel == "fig2c") {
        return fig2c_spec(seed);
    }
    if (panel == "collapse") {
        return collapse_spec(seed);
    }
    throw Error(ErrorCode::InvalidArgument, "unknown panel " + panel);
}

auto with_epochs(ExperimentSpec spec, std::size_t pretrain_epochs, std::size_t fine_epochs)
    -> ExperimentSpec
{
    if (spec.pretrain_epochs > 0) {
        spec.pretrain_epochs = pretrain_epochs;
    }
    for (auto& b : spec.branches) {
        const std::size_t from = b.epochs;
        if (from == 0) {
            continue;
        }
        b.epochs = fine_epochs;
        for (auto& e : b.snapshot_epochs) {
            e = std::min(fine_epochs, scaled(e, fine_epochs, from));
        }
        std::sort(b.snapshot_epochs.begin(), b.snapshot_epochs.end());
        b.snapshot_epochs.erase(std::unique(b.snapshot_epochs.begin(), b.snapshot_epochs.end()),
                                b.snapshot_epochs.end());
    }
    return spec;
}

auto load_experiment_data(const DataSpec& spec, SubsampleReport* report) -> Dataset
{
    auto d = subsample_stratified(load_mnist(spec.data_dir, "train"), spec.fraction,
                                  spec.subsample_seed, report);
    if (spec.max_samples > 0 && spec.max_samples < d.size()) {
        d = subsample_stratified(
            d, static_cast<double>(spec.max_samples) / static_cast<double>(d.size()),
            spec.subsample_seed, report);
    }
    return d;
}

auto ExperimentResult::branch(const std::string& name) const -> const BranchResult&
{
    for (const auto& b : branches) {
        if (b.name == name) {
            return b;
        }
    }
    throw Error(ErrorCode::InvalidArgument, "no branch named " + name);
}

auto pretrain(const Dataset& data, const ExperimentSpec& spec, const ProgressLog& log)
    -> Pretrained
{
    ModelConfig base = spec.model;
    base.classifier_hidden_layers = 0;
    Pretrained p{DgmModel<float>(base, spec.seed), {}, {}, spec.pretrain_epochs,
                 spec.pretrain_weights, spec.seed};
    auto state = AdamState<float>::for_params(p.model.params());
    TrainConfig config;
    config.epochs = spec.pretrain_epochs;
    config.batch_size = spec.batch_size;
    config.learning_rate = spec.learning_rate;
    config.weights = spec.pretrain_weights;
    config.seed = spec.seed;
    FitOptions options;
    options.snapshot_at = [](std::size_t) { return false; };
    if (log) {
        options.on_epoch = [&](const SnapshotPtr& s) {
            log("pretrain epoch " + std::to_string(s->epoch) + " loss " +
                std::to_string(s->loss.total));
        };
    }
    const auto result = pretrain_unsupervised(p.model, state, data, config, options);
    p.embedding = result.snapshots.empty() ? p.model.embed_means(data)
                                           : result.snapshots.back()->points;
    p.metrics = separation_metrics(p.embedding, data.labels());
    return p;
}

auto run_experiment(const Dataset& data, const ExperimentSpec& spec, const Pretrained* shared,
                    const ProgressLog& log) -> ExperimentResult
{
    spec.validate();
    ExperimentResult result;
    result.spec = spec;
    const bool needs_pretrain = std::any_of(spec.branches.begin(), spec.branches.end(),
                                            [](const auto& b) { return b.from_pretrain; });
    if (needs_pretrain) {
        const bool reusable = shared != nullptr && shared->epochs == spec.pretrain_epochs &&
                              shared->weights == spec.pretrain_weights &&
                              shared->seed == spec.seed;
        result.pretrained = reusable ? *shared : pretrain(data, spec, log);
    }
    const Dataset train_data =
        spec.labeled_fraction < 1.0 ? strip_labels(data, spec.labeled_fraction, spec.seed) : data;

    for (std::size_t i = 0; i < spec.branches.size(); ++i) {
        const auto& b = spec.branches[i];
        const std::uint64_t branch_seed = spec.seed + i;
        ModelConfig head = spec.model;
        head.classifier_hidden_layers = b.hidden_layers;
        DgmModel<float> model = b.from_pretrain
                                    ? result.pretrained->model.with_new_head(head, branch_seed)
                                    : DgmModel<float>(head, branch_seed);

        BranchResult out;
        out.name = b.name;
        const std::set<std::size_t> keep(b.snapshot_epochs.begin(), b.snapshot_epochs.end());
        if (keep.contains(0) || b.epochs == 0) {
            out.snapshots[0] = model.embed_means(data);
        }
        if (b.epochs == 0) {
            out.final = out.snapshots[0];
            if (!keep.contains(0)) {
                out.snapshots.clear();
            }
        } else {
            auto state = AdamState<float>::for_params(model.params());
            TrainConfig config;
            config.epochs = b.epochs;
            config.batch_size = spec.batch_size;
            config.learning_rate = spec.learning_rate;
            config.weights = b.weights;
            config.seed = branch_seed;
            FitOptions options;
            options.snapshot_at = [&keep](std::size_t e) { return keep.contains(e); };
            options.on_epoch = [&](const SnapshotPtr& s) {
                if (log) {
                    log(b.name + " epoch " + std::to_string(s->epoch) + " loss " +
                        std::to_string(s->loss.total));
                }
            };
            const auto fitted = fit(model, state, train_data, config, options);
            for (const auto& s : fitted.snapshots) {
                if (keep.contains(s->epoch)) {
                    out.snapshots[s->epoch] = s->points;
                }
            }
            out.final = fitted.snapshots.back()->points;
            out.last_loss = fitted.snapshots.back()->loss;
        }
        out.metrics = separation_metrics(out.final, data.labels());
        if (log) {
            log(b.name + " done");
        }
        result.branches.push_back(std::move(out));
    }
    return result;
}

auto mean_displacement(const Embedding& a, const Embedding& b) -> double
{
    if (a.size() != b.size() || a.dim != b.dim || a.ids != b.ids) {
        throw Error(ErrorCode::ShapeMismatch, "embeddings cover different samples");
    }
    if (a.size() == 0) {
        return 0.0;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < a.dim; ++j) {
            const double d = static_cast<double>(a.mu_of(i)[j]) - b.mu_of(i)[j];
            sq += d * d;
        }
        total += std::sqrt(sq);
    }
    return total / static_cast<double>(a.size());
}

auto manifest_json(const ExperimentResult& result, const DataSpec& data, std::size_t sample_count)
    -> nlohmann::json
{
    const auto& s = result.spec;
    auto branches = nlohmann::json::array();
    for (std::size_t i = 0; i < s.branches.size(); ++i) {
        const auto& b = s.branches[i];
        branches.push_back({{"name", b.name},
                            {"classifier_hidden_layers", b.hidden_layers},
                            {"weights", b.weights},
                            {"epochs", b.epochs},
                            {"snapshot_epochs", b.snapshot_epochs},
                            {"from_pretrain", b.from_pretrain},
                            {"seed", s.seed + i}});
    }
    return {
        {"version", kVersion},
        {"panel", s.panel},
        {"seed", s.seed},
        {"data",
         {{"source", "mnist-train"},
          {"fraction", data.fraction},
          {"stratified", true},
          {"subsample_seed", data.subsample_seed},
          {"max_samples", data.max_samples},
          {"samples", sample_count},
          {"labeled_fraction", s.labeled_fraction}}},
        {"model", s.model},
        {"optimizer",
         {{"name", "adam"}, {"hyper", AdamHyper{s.learning_rate, 0.9, 0.999, 1e-8}}}},
        {"batch_size", s.batch_size},
        {"pretrain",
         {{"epochs", s.pretrain_epochs}, {"weights", s.pretrain_weights}, {"unsupervised", true}}},
        {"branches", branches},
        {"conventions",
         {{"classifier_input_training", "sampled z"},
          {"classifier_input_embedding", "mu"},
          {"reconstruction", "bernoulli cross-entropy summed over pixels"},
          {"kl", "closed form, no capacity annealing"},
          {"branch_seed", "seed + branch index"}}},
    };
}

void write_experiment(const ExperimentResult& result, const Dataset& data, const DataSpec& spec,
                      const std::filesystem::path& out_dir)
{
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
        throw Error(ErrorCode::IoError, "cannot create " + out_dir.string());
    }
    write_text(out_dir / "manifest.json", manifest_json(result, spec, data.size()).dump(2) + '\n');
    const auto& labels = data.labels();
    if (result.pretrained) {
        const auto dir = out_dir / "pretrain";
        std::filesystem::create_directories(dir, ec);
        export_csv(result.pretrained->embedding, labels, dir / "embedding.csv");
        write_text(dir / "metrics.json", to_json(result.pretrained->metrics).dump(2) + '\n');
        emit_scatter_svg(result.pretrained->embedding, labels, dir / "scatter.svg",
                         result.spec.panel + " pretrain");
    }
    for (const auto& b : result.branches) {
        const auto dir = out_dir / b.name;
        std::filesystem::create_directories(dir, ec);
        if (ec) {
            throw Error(ErrorCode::IoError, "cannot create " + dir.string());
        }
        export_csv(b.final, labels, dir / "embedding.csv");
        nlohmann::json metrics = to_json(b.metrics);
        metrics["final_loss"] = b.last_loss;
        for (const auto& [epoch, e] : b.snapshots) {
            export_csv(e, labels, dir / epoch_file(epoch));
        }
        if (b.snapshots.size() >= 2) {
            auto moves = nlohmann::json::array();
            for (auto it = std::next(b.snapshots.begin()); it != b.snapshots.end(); ++it) {
                const auto& prev = *std::prev(it);
                moves.push_back({{"from", prev.first},
                                 {"to", it->first},
                                 {"mean_displacement", mean_displacement(prev.second, it->second)}});
            }
            metrics["displacement"] = moves;
        }
        write_text(dir / "metrics.json", metrics.dump(2) + '\n');
        emit_scatter_svg(b.final, labels, dir / "scatter.svg", result.spec.panel + " " + b.name);
    }
}

} // namespace lloom
