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

#include "lloom/session.hpp"

#include <json.hpp>

#include <atomic>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>

namespace httplib {
class Server;
}

namespace lloom {

inline constexpr int kDefaultPort = 8421;

struct ServerOptions {
    std::string host = "0.0.0.0";
    int port = kDefaultPort;
    std::filesystem::path static_dir; // served at / when it exists
    std::size_t threads = 128;
    /// Epoch events a slow stream client may fall behind by before the
    /// oldest are dropped.
    std::size_t stream_buffer = 64;
};

/// JSON over HTTP around one Session:
///   GET  /api/points       current embedding with labels
///   POST /api/annotations  {assignments:[{id,label}], source}
///   POST /api/train        {epochs?, beta_kl?, beta_classifier?}
///   GET  /api/status
///   GET  /api/stream       server-sent events: epoch, done, error
/// Every endpoint but /api/status answers 503 until a session is set.
class ApiServer {
public:
    explicit ApiServer(ServerOptions options = {});
    ~ApiServer();

    ApiServer(const ApiServer&) = delete;
    auto operator=(const ApiServer&) -> ApiServer& = delete;

    void set_session(std::shared_ptr<Session> session);
    [[nodiscard]] auto session() const -> std::shared_ptr<Session>;

    /// Binds to options.port (0 picks a free one) and returns the port.
    auto bind() -> int;
    /// Serves until stop(); call bind() first or it binds itself.
    auto listen() -> bool;
    void stop();
    void wait_until_ready() const;

private:
    void install_routes();

    ServerOptions options_;
    std::unique_ptr<httplib::Server> http_;
    mutable std::mutex session_mutex_;
    std::shared_ptr<Session> session_;
    std::atomic<bool> stopping_{false};
    bool bound_ = false;
};

/// JSON bodies shared by the endpoints and their tests.
auto points_json(const PointsView& view, const Dataset& d) -> nlohmann::json;
auto stream_message_json(const StreamEvent& event) -> nlohmann::json;
auto loss_json(const LossBreakdown& loss) -> nlohmann::json;
auto status_json(const SessionStatus& s) -> nlohmann::json;

/// Parses a POST /api/train body against `base`. Throws InvalidArgument.
auto parse_train_request(const std::string& body, const TrainConfig& base) -> TrainConfig;
/// Parses a POST /api/annotations body. Throws InvalidArgument.
auto parse_annotation_request(const std::string& body) -> AnnotationEvent;

/// The HTTP status an Error maps to.
auto http_status_for(ErrorCode code) -> int;

} // namespace lloom
