#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <queue>
#include <string>
#include <thread>
#include <vector>

#include "opencity/gateway.hpp"

namespace opencity {

// Generic chat-completion endpoint. The request body is
// {"model": str, "messages": [{"role","content"}], "temperature": number};
// the reply text is read from choices[0].message.content. The API key comes
// from the environment (no key header when the variable is unset).
struct HttpBackendConfig {
    std::string host = "127.0.0.1";
    int port = 80;
    std::string path = "/v1/chat/completions";
    std::string model = "gpt-4o-mini";
    double temperature = 0.7;
    std::string api_key_env = "OPENCITY_API_KEY";
    Duration request_timeout = std::chrono::seconds(30);
};

// Readiness-driven HTTP/1.1 gateway: one epoll loop multiplexes every
// in-flight exchange over non-blocking sockets, a bounded pool of keep-alive
// connections is reused across requests, and local tasks run on a separate
// worker pool so they never delay dispatch. Unlike the virtual engine, a real
// HTTP/1.1 connection is owned by its exchange until the response is fully
// read, so concurrency is capped at pool_capacity.
class HttpGateway final : public Gateway {
public:
    HttpGateway(GatewayConfig cfg, HttpBackendConfig http);
    ~HttpGateway() override;

    ResponseHandle submit(LlmRequest req) override;
    LlmResponse await_response(ResponseHandle& h) override;
    TaskHandle offload_local_task(LocalTask task) override;
    std::string await_task(TaskHandle& h) override;
    std::vector<std::string> drain_mailbox(AgentId agent) override;
    GatewayStats gateway_stats() const override;
    void shutdown() override;

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
    enum class ConnState { connecting, writing, reading, idle };
    struct Conn {
        int fd = -1;
        ConnState state = ConnState::idle;
        std::string out;
        size_t out_off = 0;
        std::string in;
        Pending current;
        bool busy = false;
        SimTime connect_started{0};
        SimTime write_started{0};
        Duration connect_cost{0};
        Duration init_cost{0};
        SimTime deadline{0};
    };

    void io_loop();
    void worker_loop();
    void wake();
    void dispatch_locked();
    bool start_connect_locked(Conn* c);
    void begin_exchange_locked(Conn* c, Pending p);
    void handle_io_locked(Conn* c, uint32_t events);
    void finish_exchange_locked(Conn* c);
    void fail_exchange_locked(Conn* c, const std::string& why);
    void close_conn_locked(Conn* c, bool reusable);
    void update_epoll(Conn* c, uint32_t events);
    void resolve(const Pending& p, LlmResponse resp);
    void resolve_error(const Pending& p, std::exception_ptr err);

    GatewayConfig cfg_;
    HttpBackendConfig http_;
    SteadyClock clock_;
    std::string api_key_;

    mutable std::mutex mu_;
    bool closed_ = false;
    std::priority_queue<Pending, std::vector<Pending>, PendingOrder> queue_;
    std::list<Conn> conns_;
    std::vector<Conn*> idle_;
    GatewayStats stats_;
    std::map<AgentId, std::vector<std::string>> mailbox_;

    int epfd_ = -1;
    int wake_pipe_[2] = {-1, -1};
    std::thread io_thread_;

    std::mutex task_mu_;
    std::condition_variable task_cv_;
    std::deque<std::pair<LocalTask, std::shared_ptr<detail::TaskState>>> task_queue_;
    std::vector<std::thread> workers_;
    bool workers_stop_ = false;
};

}  // namespace opencity
