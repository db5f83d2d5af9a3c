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

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <mutex>
#include <optional>

namespace lloom {

/// Bounded multi-producer multi-consumer queue. Beyond `capacity` the
/// oldest non-final item is dropped; items pushed as final never are.
template <class V>
class BoundedChannel {
public:
    explicit BoundedChannel(std::size_t capacity = 64) : capacity_(capacity) {}

    void push(V value, bool final = false)
    {
        {
            std::lock_guard lock(mutex_);
            if (closed_) {
                return;
            }
            items_.push_back({std::move(value), final});
            while (items_.size() > capacity_) {
                auto victim = items_.begin();
                while (victim != items_.end() && victim->final) {
                    ++victim;
                }
                if (victim == items_.end()) {
                    break;
                }
                items_.erase(victim);
                ++dropped_;
            }
        }
        ready_.notify_all();
    }

    void close()
    {
        {
            std::lock_guard lock(mutex_);
            closed_ = true;
        }
        ready_.notify_all();
    }

    /// Blocks until an item arrives; nullopt once closed and drained.
    auto pop() -> std::optional<V>
    {
        std::unique_lock lock(mutex_);
        ready_.wait(lock, [&] { return !items_.empty() || closed_; });
        return take();
    }

    /// Like pop but gives up after `timeout`.
    template <class Duration>
    auto pop_for(Duration timeout) -> std::optional<V>
    {
        std::unique_lock lock(mutex_);
        ready_.wait_for(lock, timeout, [&] { return !items_.empty() || closed_; });
        return take();
    }

    auto try_pop() -> std::optional<V>
    {
        std::lock_guard lock(mutex_);
        return take();
    }

    [[nodiscard]] auto dropped() const -> std::size_t
    {
        std::lock_guard lock(mutex_);
        return dropped_;
    }
    [[nodiscard]] auto size() const -> std::size_t
    {
        std::lock_guard lock(mutex_);
        return items_.size();
    }
    [[nodiscard]] auto closed() const -> bool
    {
        std::lock_guard lock(mutex_);
        return closed_;
    }

private:
    struct Item {
        V value;
        bool final = false;
    };

    auto take() -> std::optional<V>
    {
        if (items_.empty()) {
            return std::nullopt;
        }
        std::optional<V> out(std::move(items_.front().value));
        items_.pop_front();
        return out;
    }

    std::size_t capacity_;
    mutable std::mutex mutex_;
    std::condition_variable ready_;
    std::deque<Item> items_;
    std::size_t dropped_ = 0;
    bool closed_ = false;
};

} // namespace lloom
