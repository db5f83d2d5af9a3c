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

#include "lloom/server.hpp"

#include "lloom/json_io.hpp"

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace lloom {

namespace {

using nlohmann::json;

constexpr const char* kJson = "application/json";

void send(httplib::Response& res, int status, const json& body)
{
    res.status = status;
    res.set_content(body.dump(), kJson);
}

void send_error(httplib::Response& res, const Error& e)
{
    send(res, http_status_for(e.code()),
         {{"error", std::string(to_string(e.code()))}, {"message", e.what()}});
}

auto floats(std::span<const float> values) -> json
{
    auto out = json::array();
    for (float v : values) {
        out.push_back(v);
    }
    return out;
}

auto event_name(StreamEvent::Kind kind) -> const char*
{
    switch (kind) {
    case StreamEvent::Kind::Epoch: return "epoch";
    case StreamEvent::Kind::Done: return "done";
    case StreamEvent::Kind::Error: return "error";
    }
    return "error";
}

} // namespace

auto http_status_for(ErrorCode code) -> int
{
    switch (code) {
    case ErrorCode::UnknownSampleId: return 404;
    case ErrorCode::ClassOutOfRange: return 422;
    case ErrorCode::AlreadyTraining: return 409;
    case ErrorCode::InvalidArgument: return 400;
    default: return 500;
    }
}

auto loss_json(const LossBreakdown& loss) -> json
{
    return {{"total", loss.total},
            {"reconst", loss.reconstruction},
            {"kl", loss.kl},
            {"classifier", loss.classifier}};
}

auto points_json(const PointsView& view, const Dataset& d) -> json
{
    const auto& e = view.snapshot->points;
    std::vector<std::size_t> order(e.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return e.ids[a] < e.ids[b]; });
    auto points = json::array();
    for (auto i : order) {
        const auto pos = d.index_of(e.ids[i]);
        const auto label = pos ? view.labels[*pos] : std::nullopt;
        points.push_back({{"id", e.ids[i]},
                          {"mu", floats(e.mu_of(i))},
                          {"sigma", floats(e.sigma_of(i))},
                          {"label", label ? json(*label) : json(nullptr)},
                          {"pred", e.pred[i]},
                          {"conf", e.confidence[i]}});
    }
    return {{"cycle", view.snapshot->cycle},
            {"epoch", view.snapshot->epoch},
            {"points", std::move(points)}};
}

auto stream_message_json(const StreamEvent& event) -> json
{
    json out = {{"type", event_name(event.kind)}, {"cycle", event.cycle}, {"epoch", event.epoch}};
    if (event.kind == StreamEvent::Kind::Epoch && event.snapshot) {
        const auto& e = event.snapshot->points;
        auto points = json::array();
        for (std::size_t i = 0; i < e.size(); ++i) {
            auto row = json::array({e.ids[i]});
            for (float v : e.mu_of(i)) {
                row.push_back(v);
            }
            points.push_back(std::move(row));
        }
        out["loss"] = loss_json(event.snapshot->loss);
        out["points"] = std::move(points);
    }
    if (event.kind == StreamEvent::Kind::Error) {
        out["message"] = event.message;
    }
    return out;
}

auto status_json(const SessionStatus& s) -> json
{
    return {{"training", s.training},
            {"cycle", s.cycle},
            {"epoch", s.epoch},
            {"labeled", s.labeled},
            {"n", s.n},
            {"config", {{"model", s.model}, {"train", s.train}}}};
}

auto parse_train_request(const std::string& body, const TrainConfig& base) -> TrainConfig
{
    json j = json::object();
    if (!body.empty()) {
        j = json::parse(body, nullptr, false);
    }
    if (!j.is_object()) {
        throw Error(ErrorCode::InvalidArgument, "train body must be a JSON object");
    }
    TrainConfig config = base;
    if (j.contains("epochs")) {
        const auto& v = j["epochs"];
        if (!v.is_number_integer() || v.get<std::int64_t>() < 1) {
            throw Error(ErrorCode::InvalidArgument, "epochs must be an integer >= 1");
        }
        config.epochs = v.get<std::size_t>();
    }
    for (const auto& [key, target] :
         {std::pair{"beta_kl", &config.weights.beta_kl},
          std::pair{"beta_classifier", &config.weights.beta_classifier}}) {
        if (!j.contains(key)) {
            continue;
        }
        const auto& v = j[key];
        if (!v.is_number() || !std::isfinite(v.get<double>()) || v.get<double>() < 0.0) {
            throw Error(ErrorCode::InvalidArgument,
                        std::string(key) + " must be a finite number >= 0");
        }
        *target = v.get<double>();
    }
    return config;
}

auto parse_annotation_request(const std::string& body) -> AnnotationEvent
{
    const json j = json::parse(body, nullptr, false);
    if (!j.is_object() || !j.contains("assignments") || !j["assignments"].is_array()) {
        throw Error(ErrorCode::InvalidArgument, "body needs an assignments array");
    }
    AnnotationEvent e;
    e.source = "ui";
    if (j.contains("source")) {
        if (!j["source"].is_string()) {
            throw Error(ErrorCode::InvalidArgument, "source must be a string");
        }
        e.source = j["source"].get<std::string>();
    }
    for (const auto& a : j["assignments"]) {
        if (!a.is_object() || !a.contains("id") || !a.contains("label") ||
            !a["id"].is_number_integer() || !a["label"].is_number_integer()) {
            throw Error(ErrorCode::InvalidArgument, "each assignment needs integer id and label");
        }
        const auto label = a["label"].get<std::int64_t>();
        e.assignments.push_back(
            {a["id"].get<std::int64_t>(),
             static_cast<int>(std::clamp<std::int64_t>(label, -1, kNumClasses))});
    }
    return e;
}

ApiServer::ApiServer(ServerOptions options)
    : options_(std::move(options)), http_(std::make_unique<httplib::Server>())
{
    const std::size_t threads = options_.threads;
    http_->new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
    install_routes();
}

ApiServer::~ApiServer()
{
    stop();
}

void ApiServer::set_session(std::shared_ptr<Session> session)
{
    std::lock_guard lock(session_mutex_);
    session_ = std::move(session);
}

auto ApiServer::session() const -> std::shared_ptr<Session>
{
    std::lock_guard lock(session_mutex_);
    return session_;
}

void ApiServer::install_routes()
{
    const auto with_session = [this](auto handler) {
        return [this, handler](const httplib::Request& req, httplib::Response& res) {
            auto s = session();
            if (!s) {
                send(res, 503, {{"error", "NoSession"}, {"message", "session not initialized"}});
                return;
            }
            try {
                handler(*s, req, res);
            } catch (const Error& e) {
                send_error(res, e);
            }
        };
    };

    http_->Get("/api/points", with_session([](Session& s, const auto&, auto& res) {
                   send(res, 200, points_json(s.current_points(), s.dataset()));
               }));

    http_->Post("/api/annotations", with_session([](Session& s, const auto& req, auto& res) {
                    const auto summary = s.apply_annotations(parse_annotation_request(req.body));
                    send(res, 200,
                         {{"accepted", summary.accepted},
                          {"relabeled", summary.relabeled},
                          {"total_labeled", summary.total_labeled}});
                }));

    http_->Post("/api/train", with_session([](Session& s, const auto& req, auto& res) {
                    const auto config = parse_train_request(req.body, s.status().train);
                    try {
                        const auto cycle = s.trigger_update(config);
                        send(res, 200, {{"cycle", cycle}, {"status", "started"}});
                    } catch (const Error& e) {
                        if (e.code() != ErrorCode::AlreadyTraining) {
                            throw;
                        }
                        send(res, 409, {{"status", "training"}});
                    }
                }));

    http_->Get("/api/status", [this](const httplib::Request&, httplib::Response& res) {
        auto s = session();
        if (!s) {
            send(res, 200, {{"training", false}, {"ready", false}});
            return;
        }
        auto body = status_json(s->status());
        body["ready"] = true;
        send(res, 200, body);
    });

    http_->Get("/api/stream", with_session([this](Session& s, const auto&, auto& res) {
                   auto channel = s.subscribe(options_.stream_buffer);
                   res.set_header("Cache-Control", "no-cache");
                   res.set_chunked_content_provider(
                       "text/event-stream",
                       [this, channel, idle = 0](std::size_t, httplib::DataSink& sink) mutable {
                           if (stopping_) {
                               sink.done();
                               return false;
                           }
                           auto event = channel->pop_for(std::chrono::milliseconds(200));
                           std::string frame;
                           if (event) {
                               idle = 0;
                               frame = std::string("event: ") + event_name(event->kind) +
                                       "\ndata: " + stream_message_json(*event).dump() + "\n\n";
                           } else if (++idle >= 25) {
                               idle = 0;
                               frame = ": keep-alive\n\n";
                           }
                           if (!frame.empty() && !sink.write(frame.data(), frame.size())) {
                               return false;
                           }
                           return true;
                       });
               }));

    if (!options_.static_dir.empty() && std::filesystem::is_directory(options_.static_dir)) {
        http_->set_mount_point("/", options_.static_dir.string());
    }
}

auto ApiServer::bind() -> int
{
    if (options_.port == 0) {
        options_.port = http_->bind_to_any_port(options_.host);
        bound_ = options_.port > 0;
    } else {
        bound_ = http_->bind_to_port(options_.host, options_.port);
    }
    if (!bound_) {
        throw Error(ErrorCode::IoError, "cannot bind " + options_.host + ":" +
                                            std::to_string(options_.port));
    }
    return options_.port;
}

auto ApiServer::listen() -> bool
{
    if (!bound_) {
        bind();
    }
    return http_->listen_after_bind();
}

void ApiServer::stop()
{
    stopping_ = true;
    if (http_) {
        http_->stop();
    }
}

void ApiServer::wait_until_ready() const
{
    http_->wait_until_ready();
}

} // namespace lloom
