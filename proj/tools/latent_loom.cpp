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

#include "lloom/checkpoint.hpp"
#include "lloom/experiments.hpp"
#include "lloom/json_io.hpp"
#include "lloom/report.hpp"
#include "lloom/server.hpp"
#include "lloom/session.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <thread>

using namespace lloom;
using nlohmann::json;

namespace {

auto default_data_dir() -> std::string
{
    if (const char* env = std::getenv("LLOOM_DATA_DIR"); env != nullptr && *env != '\0') {
        return env;
    }
    return "/root/data/mnist";
}

void emit(const json& j)
{
    std::cout << j.dump() << '\n' << std::flush;
}

void emit_error(std::string_view code, const std::string& message)
{
    std::cerr << json{{"error", code}, {"message", message}}.dump() << '\n' << std::flush;
}

struct ExperimentArgs {
    std::string panel;
    std::uint64_t seed = 42;
    std::string out = "runs";
    std::string data_dir = default_data_dir();
    std::size_t max_samples = 0;
    std::optional<std::size_t> epochs;
    std::optional<std::size_t> pretrain_epochs;
    double beta_kl = 1000.0;
    std::optional<std::size_t> batch_size;
};

auto run_experiment_command(const ExperimentArgs& a) -> int
{
    auto spec = a.panel == "collapse" ? collapse_spec(a.seed, a.beta_kl)
                                      : spec_for_panel(a.panel, a.seed);
    if (a.epochs || a.pretrain_epochs) {
        spec = with_epochs(spec, a.pretrain_epochs.value_or(spec.pretrain_epochs),
                           a.epochs.value_or(50));
    }
    if (a.batch_size) {
        spec.batch_size = *a.batch_size;
    }
    DataSpec data_spec;
    data_spec.data_dir = a.data_dir;
    data_spec.max_samples = a.max_samples;
    const auto data = load_experiment_data(data_spec);
    const auto result = run_experiment(data, spec, nullptr, [](const std::string& line) {
        std::cerr << line << '\n';
    });
    const std::filesystem::path out = std::filesystem::path(a.out) / spec.panel;
    write_experiment(result, data, data_spec, out);

    json summary = {{"panel", spec.panel}, {"out", out.string()}, {"n", data.size()}};
    if (result.pretrained) {
        summary["pretrain"] = to_json(result.pretrained->metrics);
    }
    for (const auto& b : result.branches) {
        summary["branches"][b.name] = to_json(b.metrics);
    }
    emit(summary);
    return 0;
}

struct TrainArgs {
    std::size_t epochs = 50;
    std::size_t pretrain_epochs = 0;
    double beta_kl = 3.0;
    double beta_classifier = 100.0;
    double labeled_fraction = 1.0;
    std::size_t latent_dim = 2;
    std::size_t hidden_layers = 0;
    std::uint64_t seed = 42;
    std::string data_dir = default_data_dir();
    std::string checkpoint = "model.ckpt";
    std::string resume;
};

auto run_train_command(const TrainArgs& a) -> int
{
    DataSpec data_spec;
    data_spec.data_dir = a.data_dir;
    const auto full = load_experiment_data(data_spec);
    const auto data = strip_labels(full, a.labeled_fraction, a.seed);

    TrainConfig train;
    train.epochs = a.epochs;
    train.weights = {a.beta_kl, a.beta_classifier};
    train.seed = a.seed;

    std::optional<DgmModel<float>> model;
    AdamState<float> adam;
    std::size_t done = 0;
    if (!a.resume.empty()) {
        auto ck = load_checkpoint(a.resume);
        model.emplace(ck.model, std::move(ck.params));
        adam = std::move(ck.adam);
        done = ck.epochs_completed;
    } else {
        ModelConfig mc;
        mc.latent_dim = a.latent_dim;
        mc.classifier_hidden_layers = a.hidden_layers;
        model.emplace(mc, a.seed);
        adam = AdamState<float>::for_params(model->params());
    }

    auto report = [](const SnapshotPtr& s) {
        emit({{"epoch", s->epoch}, {"loss", loss_json(s->loss)}});
    };
    if (a.pretrain_epochs > 0) {
        TrainConfig pre = train;
        pre.epochs = a.pretrain_epochs;
        FitOptions o;
        o.first_epoch = done;
        o.on_epoch = report;
        pretrain_unsupervised(*model, adam, data, pre, o);
        done += a.pretrain_epochs;
    }
    FitOptions o;
    o.first_epoch = done;
    o.on_epoch = report;
    fit(*model, adam, data, train, o);
    done += a.epochs;

    Checkpoint ck{model->config(), train, model->params(), adam, done, 0};
    save_checkpoint(ck, a.checkpoint);
    const auto emb = model->embed_means(full);
    emit({{"checkpoint", a.checkpoint},
          {"epochs_completed", done},
          {"metrics", to_json(separation_metrics(emb, full.labels()))}});
    return 0;
}

struct ServeArgs {
    int port = kDefaultPort;
    std::string host = "0.0.0.0";
    std::string data_dir = default_data_dir();
    std::string checkpoint;
    std::string session_dir;
    std::string static_dir;
    std::size_t latent_dim = 2;
    double labeled_fraction = 0.0;
    std::uint64_t seed = 42;
};

std::atomic<ApiServer*> g_server{nullptr};

extern "C" void handle_signal(int)
{
    if (auto* s = g_server.load()) {
        s->stop();
    }
}

auto run_serve_command(const ServeArgs& a) -> int
{
    DataSpec data_spec;
    data_spec.data_dir = a.data_dir;
    const auto images = load_experiment_data(data_spec);

    std::shared_ptr<Session> session;
    const bool resume = !a.session_dir.empty() &&
                        std::filesystem::exists(std::filesystem::path(a.session_dir) / "checkpoint.bin");
    if (resume) {
        session = Session::restore(a.session_dir, images);
    } else {
        auto data = strip_labels(images, a.labeled_fraction, a.seed);
        if (!a.checkpoint.empty()) {
            session = std::make_shared<Session>(std::move(data), load_checkpoint(a.checkpoint),
                                                Session::default_train_config());
        } else {
            ModelConfig mc;
            mc.latent_dim = a.latent_dim;
            session = std::make_shared<Session>(std::move(data), mc,
                                                Session::default_train_config(), a.seed);
        }
    }

    ServerOptions options;
    options.host = a.host;
    options.port = a.port;
    options.static_dir = a.static_dir;
    ApiServer server(options);
    server.set_session(session);
    const int port = server.bind();
    g_server = &server;
    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);
    emit({{"listening", port}, {"n", session->status().n}, {"resumed", resume}});
    server.listen();
    g_server = nullptr;
    session->wait_idle();
    if (!a.session_dir.empty()) {
        session->persist(a.session_dir);
        emit({{"persisted", a.session_dir}});
    }
    return 0;
}

} // namespace

auto main(int argc, char** argv) -> int
{
    CLI::App app{"Interactive semi-supervised VAE: experiments, training and the annotation server"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    ExperimentArgs ex;
    auto* exp = app.add_subcommand("experiment", "Run one experiment grid and write its outputs");
    exp->add_option("panel", ex.panel, "fig2a, fig2b, fig2c or collapse")
        ->required()
        ->check(CLI::IsMember({"fig2a", "fig2b", "fig2c", "collapse"}));
    exp->add_option("--seed", ex.seed)->envname("LLOOM_SEED");
    exp->add_option("--out", ex.out, "Output root; the panel gets a subdirectory");
    exp->add_option("--data-dir", ex.data_dir)->envname("LLOOM_DATA_DIR");
    exp->add_option("--max-samples", ex.max_samples, "Stratified cap for smoke runs");
    exp->add_option("--epochs", ex.epochs, "Fine-tune epochs per branch");
    exp->add_option("--pretrain-epochs", ex.pretrain_epochs);
    exp->add_option("--beta-kl", ex.beta_kl, "beta_KL of the collapse run");
    exp->add_option("--batch-size", ex.batch_size)->check(CLI::PositiveNumber);

    TrainArgs tr;
    auto* train = app.add_subcommand("train", "Train one model and save a checkpoint");
    train->add_option("--epochs", tr.epochs);
    train->add_option("--pretrain-epochs", tr.pretrain_epochs, "Unsupervised epochs first");
    train->add_option("--beta-kl", tr.beta_kl)->check(CLI::NonNegativeNumber);
    train->add_option("--beta-classifier", tr.beta_classifier)->check(CLI::NonNegativeNumber);
    train->add_option("--labeled-fraction", tr.labeled_fraction)->check(CLI::Range(0.0, 1.0));
    train->add_option("--latent-dim", tr.latent_dim)->check(CLI::IsMember({2, 3}));
    train->add_option("--hidden-layers", tr.hidden_layers, "Classifier hidden layers");
    train->add_option("--seed", tr.seed)->envname("LLOOM_SEED");
    train->add_option("--data-dir", tr.data_dir)->envname("LLOOM_DATA_DIR");
    train->add_option("--checkpoint", tr.checkpoint, "Where to write the checkpoint");
    train->add_option("--resume", tr.resume, "Continue from this checkpoint");

    ServeArgs sv;
    auto* serve = app.add_subcommand("serve", "Serve the annotation API");
    serve->add_option("--port", sv.port)->envname("LLOOM_PORT");
    serve->add_option("--host", sv.host)->envname("LLOOM_HOST");
    serve->add_option("--data-dir", sv.data_dir)->envname("LLOOM_DATA_DIR");
    serve->add_option("--checkpoint", sv.checkpoint, "Start from these weights")
        ->envname("LLOOM_CHECKPOINT");
    serve->add_option("--session-dir", sv.session_dir, "Resume from and persist to this directory")
        ->envname("LLOOM_SESSION_DIR");
    serve->add_option("--static-dir", sv.static_dir, "Built UI bundle served at /")
        ->envname("LLOOM_STATIC_DIR");
    serve->add_option("--latent-dim", sv.latent_dim)
        ->envname("LLOOM_LATENT_DIM")
        ->check(CLI::IsMember({2, 3}));
    serve->add_option("--labeled-fraction", sv.labeled_fraction)
        ->envname("LLOOM_LABELED_FRACTION")
        ->check(CLI::Range(0.0, 1.0));
    serve->add_option("--seed", sv.seed)->envname("LLOOM_SEED");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        emit_error("UsageError", e.what());
        return 2;
    }

    try {
        if (*exp) {
            return run_experiment_command(ex);
        }
        if (*train) {
            return run_train_command(tr);
        }
        return run_serve_command(sv);
    } catch (const Error& e) {
        const std::string what = e.what();
        const auto prefix = std::string(to_string(e.code())) + ": ";
        emit_error(to_string(e.code()), what.rfind(prefix, 0) == 0 ? what.substr(prefix.size()) : what);
    } catch (const std::exception& e) {
        emit_error("Internal", e.what());
    }
    return 1;
}
