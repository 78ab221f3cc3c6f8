#include "opencity/gateway.hpp"

#include <algorithm>

#include "opencity/tokens.hpp"

namespace opencity {

LlmRequest RequestFactory::make(std::string prompt, std::vector<AgentId> agents) {
    LlmRequest req;
    req.prompt = std::move(prompt);
    req.agent_ids = std::move(agents);
    req.est_input_tokens = count_tokens(req.prompt);
    req.created_at = clock_.now();
    std::lock_guard lk(mu_);
    req.request_id = next_id_++;
    return req;
}

VirtualGateway::VirtualGateway(GatewayConfig cfg, std::shared_ptr<VirtualClock> clock,
                               SimulatedBackend& backend)
    : cfg_(cfg), clock_(std::move(clock)), backend_(backend) {
    if (cfg_.pool_capacity < 1) throw Error("pool_capacity must be >= 1");
    if (cfg_.worker_count < 1) throw Error("worker_count must be >= 1");
    idle_workers_ = cfg_.worker_count;
}

VirtualGateway::~VirtualGateway() {
    try {
        shutdown();
    } catch (...) {
    }
}

ResponseHandle VirtualGateway::submit(LlmRequest req) {
    std::lock_guard lk(mu_);
    if (closed_) throw GatewayClosed("submit after shutdown");
    if (req.agent_ids.empty()) throw Error("request with no agents");
    if (req.est_input_tokens < 1) throw Error("request must estimate at least one token");

    auto state = std::make_shared<detail::ResponseState>();
    state->id = req.request_id;
    // queued only; dispatch happens in the drive loop so requests submitted
    // at one virtual instant order strictly by (created_at, request_id)
    queue_.push(Pending{std::move(req), state, false});
    return ResponseHandle(state);
}

TaskHandle VirtualGateway::offload_local_task(LocalTask task) {
    std::lock_guard lk(mu_);
    if (closed_) throw WorkerPoolClosed("offload after shutdown");
    auto state = std::make_shared<detail::TaskState>();
    state->id = task.task_id;
    state->agent = task.agent_id;
    task_queue_.push_back(RunningTask{std::move(task), state});
    return TaskHandle(state);
}

void VirtualGateway::try_dispatch_locked() {
    for (;;) {
        if (queue_.empty()) return;
        if (cfg_.mode == ScheduleMode::sequential && in_flight_requests_ > 0) return;

        Duration connect_cost{0};
        bool created = false;
        if (cfg_.reuse_connections && conns_idle_ > 0) {
            --conns_idle_;
            ++stats_.connections_reused;
        } else if (conns_open_ < cfg_.pool_capacity) {
            ++conns_open_;
            ++stats_.connections_created;
            created = true;
            connect_cost = backend_.latency().t_connect;
        } else {
            return;  // no free capacity
        }
        max_conns_observed_ = std::max(max_conns_observed_, conns_open_);

        Pending p = queue_.top();
        queue_.pop();
        ++in_flight_requests_;
        if (!cfg_.reuse_connections) connect_cost += backend_.latency().t_teardown;
        dispatch_log_.emplace_back(p.req.request_id, clock_->now());

        auto payload = std::make_shared<InFlight>(InFlight{std::move(p), connect_cost});
        const SimTime done = clock_->now() + connect_cost + backend_.latency().t_init;
        events_.push(Event{done, next_seq_++, 0, payload});
        (void)created;
    }
}

void VirtualGateway::try_start_tasks_locked() {
    while (idle_workers_ > 0 && !task_queue_.empty()) {
        RunningTask rt = std::move(task_queue_.front());
        task_queue_.pop_front();
        --idle_workers_;
        const SimTime done = clock_->now() + rt.task.virtual_cost;
        events_.push(Event{done, next_seq_++, 2, std::make_shared<RunningTask>(std::move(rt))});
    }
}

void VirtualGateway::fail_locked(Pending& p, std::exception_ptr err) {
    auto st = p.state;
    {
        std::lock_guard hl(st->m);
        st->error = err;
        st->ready = true;
    }
    st->cv.notify_all();
    stats_.requests_total += 1;
}

void VirtualGateway::process_one_locked() {
    Event ev = events_.top();
    events_.pop();
    clock_->advance_to(ev.time);

    switch (ev.kind) {
        case 0: {  // transmission complete: connection returns to the pool
            auto in_flight = std::static_pointer_cast<InFlight>(ev.payload);
            if (cfg_.mode != ScheduleMode::sequential) {
                if (cfg_.reuse_connections) {
                    ++conns_idle_;
                } else {
                    --conns_open_;  // ephemeral connection, slot freed
                }
            }

            SimulatedReply reply;
            bool failed = false;
            std::exception_ptr err;
            try {
                reply = backend_.simulate(in_flight->pending.req);
            } catch (...) {
                failed = true;
                err = std::current_exception();
            }

            if (failed) {
                if (cfg_.mode == ScheduleMode::sequential) {
                    --in_flight_requests_;
                    if (cfg_.reuse_connections) ++conns_idle_; else --conns_open_;
                }
                if (!in_flight->pending.retried) {
                    in_flight->pending.retried = true;  // single retry
                    if (cfg_.mode != ScheduleMode::sequential) --in_flight_requests_;
                    queue_.push(std::move(in_flight->pending));
                } else {
                    if (cfg_.mode != ScheduleMode::sequential) --in_flight_requests_;
                    fail_locked(in_flight->pending, err);
                }
                try_dispatch_locked();
                break;
            }

            LlmResponse resp;
            resp.request_id = in_flight->pending.req.request_id;
            resp.text = std::move(reply.text);
            resp.input_tokens = reply.input_tokens;
            resp.output_tokens = reply.output_tokens;
            resp.timings.t_init = backend_.latency().t_init;
            resp.timings.t_connect = in_flight->connect_cost;
            resp.timings.t_transfer_wait = reply.wait;

            auto holder = std::make_shared<std::pair<std::shared_ptr<detail::ResponseState>, LlmResponse>>(
                in_flight->pending.state, std::move(resp));
            events_.push(Event{ev.time + reply.wait, next_seq_++, 1, holder});
            try_dispatch_locked();
            break;
        }
        case 1: {  // response arrived
            auto holder = std::static_pointer_cast<
                std::pair<std::shared_ptr<detail::ResponseState>, LlmResponse>>(ev.payload);
            LlmResponse& resp = holder->second;

            stats_.requests_total += 1;
            stats_.tokens_in_total += resp.input_tokens;
            stats_.tokens_out_total += resp.output_tokens;
            stats_.per_phase_sums += resp.timings;
            stats_.wall_time = clock_->now();

            --in_flight_requests_;
            if (cfg_.mode == ScheduleMode::sequential) {
                if (cfg_.reuse_connections) ++conns_idle_; else --conns_open_;
            }

            auto st = holder->first;
            {
                std::lock_guard hl(st->m);
                st->response = std::move(resp);
                st->ready = true;
            }
            st->cv.notify_all();
            try_dispatch_locked();
            break;
        }
        case 2: {  // local task finished on a worker
            auto rt = std::static_pointer_cast<RunningTask>(ev.payload);
            std::string result;
            std::exception_ptr err;
            try {
                if (rt->task.work) result = rt->task.work();
            } catch (...) {
                err = std::current_exception();
            }
            ++idle_workers_;
            auto st = rt->state;
            {
                std::lock_guard hl(st->m);
                if (err) {
                    st->error = err;
                } else {
                    st->result = result;
                    mailbox_[st->agent].push_back(result);
                }
                st->ready = true;
            }
            st->cv.notify_all();
            try_start_tasks_locked();
            break;
        }
        default:
            break;
    }
}

bool VirtualGateway::idle_locked() const {
    return events_.empty() && queue_.empty() && task_queue_.empty();
}

template <typename Pred>
void VirtualGateway::run_until(Pred pred) {
    for (;;) {
        std::lock_guard lk(mu_);
        if (pred()) return;
        try_dispatch_locked();
        try_start_tasks_locked();
        if (events_.empty())
            throw Error("virtual gateway stalled: nothing scheduled but a handle is unresolved");
        process_one_locked();
    }
}

LlmResponse VirtualGateway::await_response(ResponseHandle& h) {
    if (!h.valid()) throw Error("await on an empty handle");
    auto st = h.state();
    {
        std::lock_guard hl(st->m);
        if (st->consumed) throw HandleConsumed("response handle already awaited");
    }
    run_until([&] {
        std::lock_guard hl(st->m);
        return st->ready;
    });
    std::lock_guard hl(st->m);
    if (st->consumed) throw HandleConsumed("response handle already awaited");
    st->consumed = true;
    if (st->error) std::rethrow_exception(st->error);
    return std::move(*st->response);
}

std::string VirtualGateway::await_task(TaskHandle& h) {
    if (!h.valid()) throw Error("await on an empty task handle");
    auto st = h.state();
    run_until([&] {
        std::lock_guard hl(st->m);
        return st->ready;
    });
    std::lock_guard hl(st->m);
    if (st->error) std::rethrow_exception(st->error);
    return *st->result;
}

std::vector<std::string> VirtualGateway::drain_mailbox(AgentId agent) {
    std::lock_guard lk(mu_);
    auto it = mailbox_.find(agent);
    if (it == mailbox_.end()) return {};
    std::vector<std::string> out = std::move(it->second);
    mailbox_.erase(it);
    return out;
}

GatewayStats VirtualGateway::gateway_stats() const {
    std::lock_guard lk(mu_);
    GatewayStats s = stats_;
    s.wall_time = clock_->now();
    return s;
}

void VirtualGateway::drain() {
    run_until([&] { return idle_locked(); });
}

void VirtualGateway::shutdown() {
    {
        std::lock_guard lk(mu_);
        if (closed_) return;
    }
    drain();
    std::lock_guard lk(mu_);
    closed_ = true;
}

int VirtualGateway::debug_max_concurrent_connections() const {
    std::lock_guard lk(mu_);
    return max_conns_observed_;
}

std::vector<std::pair<RequestId, SimTime>> VirtualGateway::debug_dispatch_log() const {
    std::lock_guard lk(mu_);
    return dispatch_log_;
}

}  // namespace opencity
