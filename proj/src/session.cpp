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

#include "lloom/session.hpp"

#include "lloom/json_io.hpp"
#include "lloom/report.hpp"
#include "lloom/rng.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

namespace lloom {

namespace {

auto now_iso8601() -> std::string
{
    const auto now = std::chrono::system_clock::now();
    const auto secs = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&secs, &tm);
    std::array<char, 32> buf{};
    const auto len = std::strftime(buf.data(), buf.size(), "%Y-%m-%dT%H:%M:%S", &tm);
    std::array<char, 8> frac{};
    std::snprintf(frac.data(), frac.size(), ".%03dZ", static_cast<int>(ms));
    return std::string(buf.data(), len) + frac.data();
}

auto count_labeled(const std::vector<std::optional<int>>& labels) -> std::size_t
{
    return static_cast<std::size_t>(
        std::count_if(labels.begin(), labels.end(), [](const auto& l) { return l.has_value(); }));
}

// Resolves every assignment to a dataset position or throws.
auto resolve(const Dataset& d, const AnnotationEvent& e)
    -> std::vector<std::pair<std::size_t, int>>
{
    std::vector<std::pair<std::size_t, int>> out;
    out.reserve(e.assignments.size());
    for (const auto& a : e.assignments) {
        const auto pos = d.index_of(a.id);
        if (!pos) {
            throw Error(ErrorCode::UnknownSampleId, "sample id " + std::to_string(a.id));
        }
        if (a.label < 0 || a.label >= kNumClasses) {
            throw Error(ErrorCode::ClassOutOfRange, "class " + std::to_string(a.label));
        }
        out.emplace_back(*pos, a.label);
    }
    return out;
}

auto labels_json(const Dataset& d, const std::vector<std::optional<int>>& labels)
    -> nlohmann::json
{
    auto out = nlohmann::json::array();
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i]) {
            out.push_back({d.id(i), *labels[i]});
        }
    }
    return out;
}

auto initial_snapshot(const DgmModel<float>& model, const Dataset& d, std::uint64_t cycle)
    -> SnapshotPtr
{
    auto snap = std::make_shared<EpochSnapshot>();
    snap->cycle = cycle;
    snap->epoch = 0;
    snap->points = model.embed_means(d);
    return snap;
}

} // namespace

auto annotation_to_json(const AnnotationEvent& e) -> std::string
{
    nlohmann::json assignments = nlohmann::json::array();
    for (const auto& a : e.assignments) {
        assignments.push_back({{"id", a.id}, {"label", a.label}});
    }
    return nlohmann::json{{"assignments", assignments},
                          {"source", e.source},
                          {"timestamp", e.timestamp}}
        .dump();
}

auto annotation_from_json(const std::string& line) -> AnnotationEvent
{
    try {
        const auto j = nlohmann::json::parse(line);
        AnnotationEvent e;
        for (const auto& a : j.at("assignments")) {
            e.assignments.push_back({a.at("id").get<std::int64_t>(), a.at("label").get<int>()});
        }
        e.source = j.at("source").get<std::string>();
        e.timestamp = j.at("timestamp").get<std::string>();
        return e;
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorCode::InvalidArgument, ex.what());
    }
}

auto replay_annotations(const Dataset& d, std::vector<std::optional<int>> initial,
                        const std::vector<AnnotationEvent>& log)
    -> std::vector<std::optional<int>>
{
    for (const auto& e : log) {
        for (const auto& [pos, label] : resolve(d, e)) {
            initial[pos] = label;
        }
    }
    return initial;
}

auto Session::default_train_config() -> TrainConfig
{
    TrainConfig c;
    c.epochs = kDefaultCycleEpochs;
    c.weights = {kDefaultCycleWeights.beta_kl, kDefaultCycleWeights.beta_classifier};
    return c;
}

Session::Session(Dataset data, ModelConfig model, TrainConfig train, std::uint64_t seed)
    : data_(std::move(data)), seed_(seed), model_(model, seed),
      adam_(AdamState<float>::for_params(model_.params())), train_(train),
      initial_labels_(data_.labels()), labels_(data_.labels())
{
    train_.validate();
    latest_ = initial_snapshot(model_, data_, 0);
}

Session::Session(Dataset data, Checkpoint checkpoint, TrainConfig train)
    : data_(std::move(data)), seed_(checkpoint.train.seed),
      model_(checkpoint.model, std::move(checkpoint.params)), adam_(std::move(checkpoint.adam)),
      train_(train), initial_labels_(data_.labels()), labels_(data_.labels()),
      cycle_(checkpoint.cycle), epochs_completed_(checkpoint.epochs_completed)
{
    train_.validate();
    if (adam_.m.size() != model_.params().size()) {
        adam_ = AdamState<float>::for_params(model_.params(), adam_.hyper);
    }
    latest_ = initial_snapshot(model_, data_, cycle_);
}

Session::~Session()
{
    stop_ = true;
    std::lock_guard lock(worker_mutex_);
    if (worker_.joinable()) {
        worker_.join();
    }
}

auto Session::apply_annotations(AnnotationEvent event) -> AnnotationSummary
{
    if (event.timestamp.empty()) {
        event.timestamp = now_iso8601();
    }
    const auto resolved = resolve(data_, event);
    std::lock_guard lock(mutex_);
    AnnotationSummary summary;
    for (const auto& [pos, label] : resolved) {
        auto& slot = labels_[pos];
        if (slot == label) {
            continue;
        }
        if (slot) {
            ++summary.relabeled;
        } else {
            ++summary.accepted;
        }
        slot = label;
    }
    log_.push_back(std::move(event));
    summary.total_labeled = count_labeled(labels_);
    return summary;
}

auto Session::trigger_update(std::optional<TrainConfig> override) -> std::uint64_t
{
    std::unique_lock lock(mutex_);
    if (training_) {
        throw Error(ErrorCode::AlreadyTraining, "a cycle is already running");
    }
    TrainConfig config = override.value_or(train_);
    config.validate();
    if (config.epochs < 1) {
        throw Error(ErrorCode::InvalidArgument, "an update needs at least one epoch");
    }
    const std::uint64_t cycle = ++cycle_;
    training_ = true;
    Dataset labeled = data_.with_labels(labels_);
    DgmModel<float> model = model_;
    AdamState<float> state = adam_;
    lock.unlock();

    std::lock_guard worker_lock(worker_mutex_);
    if (worker_.joinable()) {
        worker_.join();
    }
    worker_ = std::thread([this, cycle, config, labeled = std::move(labeled),
                           model = std::move(model), state = std::move(state)]() mutable {
        run_cycle(cycle, config, std::move(labeled), std::move(model), std::move(state));
    });
    return cycle;
}

void Session::run_cycle(std::uint64_t cycle, TrainConfig config, Dataset labeled,
                        DgmModel<float> model, AdamState<float> state)
{
    TrainConfig run = config;
    run.seed = rng::derive_key({config.seed, cycle});
    FitOptions options;
    options.cycle = cycle;
    options.stop_requested = [this] { return stop_.load(); };
    options.on_epoch = [&](const SnapshotPtr& snap) {
        std::lock_guard lock(mutex_);
        latest_ = snap;
        publish_locked({StreamEvent::Kind::Epoch, cycle, snap->epoch, snap, {}},
                       snap->epoch == run.epochs);
    };
    StreamEvent outcome{StreamEvent::Kind::Done, cycle, 0, nullptr, {}};
    try {
        const auto result = fit(model, state, labeled, run, options);
        outcome.epoch = result.epochs_run;
        std::lock_guard lock(mutex_);
        model_ = std::move(model);
        adam_ = std::move(state);
        epochs_completed_ += result.epochs_run;
    } catch (const TrainingDiverged& e) {
        outcome = {StreamEvent::Kind::Error, cycle, e.epoch(), nullptr, e.what()};
    } catch (const std::exception& e) {
        std::lock_guard lock(mutex_);
        outcome = {StreamEvent::Kind::Error, cycle, latest_ ? latest_->epoch : 0, nullptr, e.what()};
    }
    {
        std::lock_guard lock(mutex_);
        training_ = false;
        publish_locked(std::move(outcome), true);
    }
    idle_.notify_all();
}

void Session::publish_locked(const StreamEvent& event, bool final)
{
    std::erase_if(subscribers_, [](const auto& w) { return w.expired(); });
    for (const auto& w : subscribers_) {
        if (auto s = w.lock()) {
            s->push(event, final);
        }
    }
}

void Session::wait_idle()
{
    std::unique_lock lock(mutex_);
    idle_.wait(lock, [&] { return !training_; });
}

auto Session::current_points() const -> PointsView
{
    std::lock_guard lock(mutex_);
    return {latest_, labels_};
}

auto Session::status() const -> SessionStatus
{
    std::lock_guard lock(mutex_);
    SessionStatus s;
    s.training = training_;
    s.cycle = cycle_;
    s.epoch = latest_ ? latest_->epoch : 0;
    s.labeled = count_labeled(labels_);
    s.n = data_.size();
    s.model = model_.config();
    s.train = train_;
    return s;
}

auto Session::labels() const -> std::vector<std::optional<int>>
{
    std::lock_guard lock(mutex_);
    return labels_;
}

auto Session::initial_labels() const -> std::vector<std::optional<int>>
{
    std::lock_guard lock(mutex_);
    return initial_labels_;
}

auto Session::annotation_log() const -> std::vector<AnnotationEvent>
{
    std::lock_guard lock(mutex_);
    return log_;
}

auto Session::model() const -> DgmModel<float>
{
    std::lock_guard lock(mutex_);
    return model_;
}

auto Session::adam_state() const -> AdamState<float>
{
    std::lock_guard lock(mutex_);
    return adam_;
}

auto Session::subscribe(std::size_t capacity) -> std::shared_ptr<EventChannel>
{
    auto channel = std::make_shared<EventChannel>(capacity);
    std::lock_guard lock(mutex_);
    if (latest_) {
        channel->push({StreamEvent::Kind::Epoch, latest_->cycle, latest_->epoch, latest_, {}});
    }
    subscribers_.push_back(channel);
    return channel;
}

void Session::persist(const std::filesystem::path& dir) const
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw Error(ErrorCode::IoError, "cannot create " + dir.string());
    }
    Checkpoint ck;
    std::string log_text;
    nlohmann::json config;
    {
        std::lock_guard lock(mutex_);
        ck.model = model_.config();
        ck.train = train_;
        ck.params = model_.params();
        ck.adam = adam_;
        ck.epochs_completed = epochs_completed_;
        ck.cycle = cycle_;
        for (const auto& e : log_) {
            log_text += annotation_to_json(e) + '\n';
        }
        config = {{"version", 1},
                  {"seed", seed_},
                  {"model", model_.config()},
                  {"train", train_},
                  {"cycle", cycle_},
                  {"n", data_.size()},
                  {"initial_labels", labels_json(data_, initial_labels_)}};
    }
    save_checkpoint(ck, dir / "checkpoint.bin");
    write_text(dir / "annotations.ndjson", log_text);
    write_text(dir / "config.json", config.dump(2) + '\n');
}

auto Session::restore(const std::filesystem::path& dir, const Dataset& images)
    -> std::unique_ptr<Session>
{
    nlohmann::json config;
    try {
        config = nlohmann::json::parse(read_text(dir / "config.json"));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::IoError, std::string("unreadable config.json: ") + e.what());
    }
    std::vector<std::optional<int>> initial(images.size());
    TrainConfig train;
    try {
        if (config.at("n").get<std::size_t>() != images.size()) {
            throw Error(ErrorCode::CountMismatch, "session was recorded over " +
                                                      config.at("n").dump() + " samples");
        }
        for (const auto& pair : config.at("initial_labels")) {
            const auto pos = images.index_of(pair.at(0).get<std::int64_t>());
            if (!pos) {
                throw Error(ErrorCode::UnknownSampleId, "initial label for " + pair.at(0).dump());
            }
            initial[*pos] = pair.at(1).get<int>();
        }
        train = config.at("train").get<TrainConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::IoError, std::string("bad config.json: ") + e.what());
    }

    std::vector<AnnotationEvent> log;
    {
        std::istringstream in(read_text(dir / "annotations.ndjson"));
        std::string line;
        std::size_t record = 0;
        while (std::getline(in, line)) {
            if (line.empty()) {
                continue;
            }
            try {
                log.push_back(annotation_from_json(line));
            } catch (const Error&) {
                throw Error(ErrorCode::CorruptLog, "record " + std::to_string(record) +
                                                       " is not a valid annotation event");
            }
            ++record;
        }
    }
    const Dataset base = images.with_labels(initial);
    std::vector<std::optional<int>> labels = initial;
    for (std::size_t i = 0; i < log.size(); ++i) {
        try {
            labels = replay_annotations(base, std::move(labels), {log[i]});
        } catch (const Error& e) {
            throw Error(ErrorCode::CorruptLog,
                        "record " + std::to_string(i) + " does not replay: " + e.what());
        }
    }

    auto ck = load_checkpoint(dir / "checkpoint.bin");
    auto session = std::make_unique<Session>(base, std::move(ck), train);
    session->seed_ = config.value("seed", session->seed_);
    session->log_ = std::move(log);
    session->labels_ = std::move(labels);
    return session;
}

} // namespace lloom
