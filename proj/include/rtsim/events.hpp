#pragma once

#include "rtsim/types.hpp"

#include <any>
#include <condition_variable>
#include <functional>
#include <mutex>
#include <thread>
#include <deque>
#include <memory>
#include <string>

namespace rtsim {

// mouse and key have no producer in a headless build. `error` carries
// failures that must not stop the physics loop.
enum class EventKind : std::uint8_t {
    physics_update,
    visual_update,
    mouse,
    key,
    simulation_start,
    simulation_stop,
    custom1,
    custom2,
    custom3,
    custom4,
    error,
};
inline constexpr std::size_t kEventKindCount = 11;

const char* to_string(EventKind kind);

struct Event {
    EventKind kind = EventKind::custom1;
    double timestamp = 0.0;  // simulation time, s
    std::any payload;
    std::uint64_t sequence = 0;  // set by post()
};

/// FIFO event queue with observers per kind. Posting is thread-safe.
/// An observer sees an event only if it was attached before the event was
/// posted; both share one sequence counter. An observer that throws is
/// recorded and skipped for that event; the others still run.
class EventDispatcher {
public:
    using Callback = std::function<void(const Event&)>;
    using ObserverId = std::uint64_t;

    EventDispatcher() = default;
    ~EventDispatcher();
    EventDispatcher(const EventDispatcher&) = delete;
    EventDispatcher& operator=(const EventDispatcher&) = delete;

    ObserverId attach(EventKind kind, Callback callback);
    void detach(ObserverId id);

    std::uint64_t post(Event event);
    std::uint64_t post(EventKind kind, double timestamp, std::any payload = {});

    // Delivers every event queued when the call starts. Returns the number
    // of events delivered.
    std::size_t dispatch_pending();

    // Dedicated dispatch thread; stop() drains the queue first.
    void start();
    void stop();
    bool running() const { return worker_.joinable(); }

    std::size_t pending() const;
    std::uint64_t notifications() const;
    std::vector<std::string> failures() const;

private:
    struct Observer {
        ObserverId id;
        EventKind kind;
        std::uint64_t attached_at;
        std::shared_ptr<Callback> callback;
    };

    mutable std::mutex mutex_;
    std::condition_variable wake_;
    std::deque<Event> queue_;
    std::vector<Observer> observers_;
    std::uint64_t sequence_ = 0;
    std::uint64_t notifications_ = 0;
    std::vector<std::string> failures_;
    std::mutex dispatch_mutex_;  // one dispatcher at a time
    std::thread worker_;
    bool stopping_ = false;
};

}  // namespace rtsim
