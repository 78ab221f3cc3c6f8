#pragma once

#include <condition_variable>
#include <deque>
#include <exception>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <queue>
#include <vector>

#include "opencity/backend.hpp"
#include "opencity/clock.hpp"
#include "opencity/errors.hpp"
#include "opencity/types.hpp"

namespace opencity {

enum class ScheduleMode {
    async,       // waits overlap; a connection is held for establish+transmit
    sequential,  // one request end-to-end at a time (baseline)
};

struct GatewayConfig {
    int pool_capacity = 8;
    bool reuse_connections = true;
    int worker_count = 4;
    ScheduleMode mode = ScheduleMode::async;
};

namespace detail {
struct ResponseState {
    std::mutex m;
    std::condition_variable cv;
    RequestId id = 0;
    std::optional<LlmResponse> response;
    std::exception_ptr error;
    bool ready = false;
    bool consumed = false;
};
struct TaskState {
    std::mutex m;
    std::condition_variable cv;
    uint64_t id = 0;
    AgentId agent = 0;
    std::optional<std::string> result;
    std::exception_ptr error;
    bool ready = false;
};
}  // namespace detail

// Yields exactly one LlmResponse or one error; awaitable once. May be moved
// across threads.
class ResponseHandle {
public:
    ResponseHandle() = default;
    explicit ResponseHandle(std::shared_ptr<detail::ResponseState> s) : state_(std::move(s)) {}
    bool valid() const { return state_ != nullptr; }
    RequestId request_id() const { return state_ ? state_->id : 0; }
    std::shared_ptr<detail::ResponseState> state() const { return state_; }

private:
    std::shared_ptr<detail::ResponseState> state_;
};

class TaskHandle {
public:
    TaskHandle() = default;
    explicit TaskHandle(std::shared_ptr<detail::TaskState> s) : state_(std::move(s)) {}
    bool valid() const { return state_ != nullptr; }
    std::shared_ptr<detail::TaskState> state() const { return state_; }

private:
    std::shared_ptr<detail::TaskState> state_;
};

// Schedules many concurrent LLM requests over a bounded pool of reusable
// connections and offloads agents' local CPU tasks to a worker pool so
// request dispatch never blocks on them.
class Gateway {
public:
    virtual ~Gateway() = default;

    // Non-blocking: the request is queued and eventually dispatched FIFO by
    // (created_at, request_id) on a pooled connection.
    virtual ResponseHandle submit(LlmRequest req) = 0;

    // Blocks the caller (only) until the response is ready. Second await on
    // the same handle throws HandleConsumed.
    virtual LlmResponse await_response(ResponseHandle& h) = 0;

    virtual TaskHandle offload_local_task(LocalTask task) = 0;
    virtual std::string await_task(TaskHandle& h) = 0;

    // Results of completed local tasks for an agent, in completion order;
    // consumed on read.
    virtual std::vector<std::string> drain_mailbox(AgentId agent) = 0;

    virtual GatewayStats gateway_stats() const = 0;
    virtual void shutdown() = 0;
};

// Stamps outgoing requests with unique ids, creation time and the token
// estimate of the rendered prompt.
class RequestFactory {
public:
    explicit RequestFactory(const Clock& clock) : clock_(clock) {}
    LlmRequest make(std::string prompt, std::vector<AgentId> agents);

private:
    const Clock& clock_;
    RequestId next_id_ = 1;
    std::mutex mu_;
};

// Deterministic gateway over a virtual clock and a simulated backend: a
// discrete-event engine driven by awaiting threads. The pool model follows
// the paper's accounting: a connection is occupied while it is established
// and the request is populated into it (t_connect + t_init); the server wait
// is the operating system's business and overlaps freely. Connections
// persist for the run when reuse is on; with reuse off every request
// establishes and tears down its own connection.
class VirtualGateway final : public Gateway {
public:
    VirtualGateway(GatewayConfig cfg, std::shared_ptr<VirtualClock> clock,
                   SimulatedBackend& backend);
    ~VirtualGateway() override;

    ResponseHandle submit(LlmRequest req) override;
    LlmResponse await_response(ResponseHandle& h) override;
    TaskHandle offload_local_task(LocalTask task) override;
    std::string await_task(TaskHandle& h) override;
    std::vector<std::string> drain_mailbox(AgentId agent) override;
    GatewayStats gateway_stats() const override;
    void shutdown() override;

    // Drains every queued request and task, advancing virtual time.
    void drain();

    // test visibility
    int debug_max_concurrent_connections() const;
    std::vector<std::pair<RequestId, SimTime>> debug_dispatch_log() const;

private:
    struct Pending {
        LlmRequest req;
        std::shared_ptr<detail::ResponseState> state;
        bool retried = false;
    };
    struct PendingOrder {
        bool operator()(const Pending& a, const Pending& b) const {
            if (a.req.created_at != b.req.created_at) return a.req.created_at > b.req.created_at;
            return a.req.request_id > b.req.request_id;
        }
    };
    struct Event {
        SimTime time{0};
        uint64_t seq = 0;
        int kind = 0;  // 0 transmit-done, 1 response-ready, 2 task-done
        std::shared_ptr<void> payload;
        bool operator>(const Event& o) const {
            if (time != o.time) return time > o.time;
            return seq > o.seq;
        }
    };
    struct InFlight {
        Pending pending;
        Duration connect_cost{0};
    };
    struct RunningTask {
        LocalTask task;
        std::shared_ptr<detail::TaskState> state;
    };

    void try_dispatch_locked();
    void try_start_tasks_locked();
    void process_one_locked();
    bool idle_locked() const;
    template <typename Pred>
    void run_until(Pred pred);
    void fail_locked(Pending& p, std::exception_ptr err);

    GatewayConfig cfg_;
    std::shared_ptr<VirtualClock> clock_;
    SimulatedBackend& backend_;

    mutable std::mutex mu_;
    bool closed_ = false;
    uint64_t next_seq_ = 0;

    std::priority_queue<Pending, std::vector<Pending>, PendingOrder> queue_;
    std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;

    int conns_open_ = 0;       // established or establishing right now
    int conns_idle_ = 0;       // established, sitting in the pool
    int in_flight_requests_ = 0;
    int max_conns_observed_ = 0;

    int idle_workers_ = 0;
    std::deque<RunningTask> task_queue_;

    GatewayStats stats_;
    std::map<AgentId, std::vector<std::string>> mailbox_;
    std::vector<std::pair<RequestId, SimTime>> dispatch_log_;
};

}  // namespace opencity
