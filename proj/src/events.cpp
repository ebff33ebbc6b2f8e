#include "rtsim/events.hpp"

#include <algorithm>

namespace rtsim {

const char* to_string(EventKind kind) {
    switch (kind) {
        case EventKind::physics_update: return "physics_update";
        case EventKind::visual_update: return "visual_update";
        case EventKind::mouse: return "mouse";
        case EventKind::key: return "key";
        case EventKind::simulation_start: return "simulation_start";
        case EventKind::simulation_stop: return "simulation_stop";
        case EventKind::custom1: return "custom1";
        case EventKind::custom2: return "custom2";
        case EventKind::custom3: return "custom3";
        case EventKind::custom4: return "custom4";
        case EventKind::error: return "error";
    }
    return "unknown";
}

EventDispatcher::~EventDispatcher() { stop(); }

EventDispatcher::ObserverId EventDispatcher::attach(EventKind kind, Callback callback) {
    std::lock_guard lock(mutex_);
    const auto seq = ++sequence_;
    observers_.push_back({seq, kind, seq, std::make_shared<Callback>(std::move(callback))});
    return seq;
}

void EventDispatcher::detach(ObserverId id) {
    std::lock_guard lock(mutex_);
    std::erase_if(observers_, [id](const Observer& o) { return o.id == id; });
}

std::uint64_t EventDispatcher::post(Event event) {
    std::uint64_t seq;
    {
        std::lock_guard lock(mutex_);
        seq = event.sequence = ++sequence_;
        queue_.push_back(std::move(event));
    }
    wake_.notify_one();
    return seq;
}

std::uint64_t EventDispatcher::post(EventKind kind, double timestamp, std::any payload) {
    Event e;
    e.kind = kind;
    e.timestamp = timestamp;
    e.payload = std::move(payload);
    return post(std::move(e));
}

std::size_t EventDispatcher::dispatch_pending() {
    std::lock_guard serial(dispatch_mutex_);
    std::deque<Event> batch;
    {
        std::lock_guard lock(mutex_);
        batch.swap(queue_);
    }
    for (const auto& event : batch) {
        std::vector<std::shared_ptr<Callback>> targets;
        {
            std::lock_guard lock(mutex_);
            for (const auto& o : observers_)
                if (o.kind == event.kind && o.attached_at < event.sequence) targets.push_back(o.callback);
        }
        for (const auto& cb : targets) {
            std::string failure;
            try {
                (*cb)(event);
            } catch (const std::exception& e) {
                failure = e.what();
            } catch (...) {
                failure = "unknown exception";
            }
            std::lock_guard lock(mutex_);
            ++notifications_;
            if (!failure.empty())
                failures_.push_back(std::string("observer of ") + to_string(event.kind) + " failed: " + failure);
        }
    }
    return batch.size();
}

void EventDispatcher::start() {
    if (worker_.joinable()) return;
    {
        std::lock_guard lock(mutex_);
        stopping_ = false;
    }
    worker_ = std::thread([this] {
        for (;;) {
            {
                std::unique_lock lock(mutex_);
                wake_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
                if (stopping_ && queue_.empty()) return;
            }
            dispatch_pending();
        }
    });
}

void EventDispatcher::stop() {
    if (!worker_.joinable()) return;
    {
        std::lock_guard lock(mutex_);
        stopping_ = true;
    }
    wake_.notify_all();
    worker_.join();
    dispatch_pending();
}

std::size_t EventDispatcher::pending() const {
    std::lock_guard lock(mutex_);
    return queue_.size();
}

std::uint64_t EventDispatcher::notifications() const {
    std::lock_guard lock(mutex_);
    return notifications_;
}

std::vector<std::string> EventDispatcher::failures() const {
    std::lock_guard lock(mutex_);
    return failures_;
}

}  // namespace rtsim
