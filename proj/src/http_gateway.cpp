#include "opencity/http_gateway.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/epoll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <sstream>

#include <json.hpp>

#include "opencity/tokens.hpp"

namespace opencity {

using nlohmann::json;

HttpGateway::HttpGateway(GatewayConfig cfg, HttpBackendConfig http)
    : cfg_(cfg), http_(std::move(http)) {
    if (cfg_.pool_capacity < 1) throw Error("pool_capacity must be >= 1");
    if (cfg_.worker_count < 1) throw Error("worker_count must be >= 1");
    if (const char* key = std::getenv(http_.api_key_env.c_str())) api_key_ = key;

    epfd_ = epoll_create1(0);
    if (epfd_ < 0) throw IoError("epoll_create1 failed");
    if (pipe(wake_pipe_) != 0) throw IoError("pipe failed");
    fcntl(wake_pipe_[0], F_SETFL, O_NONBLOCK);
    epoll_event ev{};
    ev.events = EPOLLIN;
    ev.data.ptr = nullptr;  // null marks the wake pipe
    epoll_ctl(epfd_, EPOLL_CTL_ADD, wake_pipe_[0], &ev);

    io_thread_ = std::thread([this] { io_loop(); });
    workers_.reserve(static_cast<size_t>(cfg_.worker_count));
    for (int i = 0; i < cfg_.worker_count; ++i) workers_.emplace_back([this] { worker_loop(); });
}

HttpGateway::~HttpGateway() {
    try {
        shutdown();
    } catch (...) {
    }
}

void HttpGateway::wake() {
    const char b = 1;
    [[maybe_unused]] ssize_t n = write(wake_pipe_[1], &b, 1);
}

ResponseHandle HttpGateway::submit(LlmRequest req) {
    std::lock_guard lk(mu_);
    if (closed_) throw GatewayClosed("submit after shutdown");
    if (req.agent_ids.empty()) throw Error("request with no agents");
    auto state = std::make_shared<detail::ResponseState>();
    state->id = req.request_id;
    queue_.push(Pending{std::move(req), state, false});
    wake();
    return ResponseHandle(state);
}

LlmResponse HttpGateway::await_response(ResponseHandle& h) {
    if (!h.valid()) throw Error("await on an empty handle");
    auto st = h.state();
    std::unique_lock lk(st->m);
    if (st->consumed) throw HandleConsumed("response handle already awaited");
    st->cv.wait(lk, [&] { return st->ready; });
    if (st->consumed) throw HandleConsumed("response handle already awaited");
    st->consumed = true;
    if (st->error) std::rethrow_exception(st->error);
    return std::move(*st->response);
}

TaskHandle HttpGateway::offload_local_task(LocalTask task) {
    auto state = std::make_shared<detail::TaskState>();
    state->id = task.task_id;
    state->agent = task.agent_id;
    {
        std::lock_guard lk(task_mu_);
        if (workers_stop_) throw WorkerPoolClosed("offload after shutdown");
        task_queue_.emplace_back(std::move(task), state);
    }
    task_cv_.notify_one();
    return TaskHandle(state);
}

std::string HttpGateway::await_task(TaskHandle& h) {
    if (!h.valid()) throw Error("await on an empty task handle");
    auto st = h.state();
    std::unique_lock lk(st->m);
    st->cv.wait(lk, [&] { return st->ready; });
    if (st->error) std::rethrow_exception(st->error);
    return *st->result;
}

std::vector<std::string> HttpGateway::drain_mailbox(AgentId agent) {
    std::lock_guard lk(mu_);
    auto it = mailbox_.find(agent);
    if (it == mailbox_.end()) return {};
    auto out = std::move(it->second);
    mailbox_.erase(it);
    return out;
}

GatewayStats HttpGateway::gateway_stats() const {
    std::lock_guard lk(mu_);
    GatewayStats s = stats_;
    s.wall_time = clock_.now();
    return s;
}

void HttpGateway::worker_loop() {
    for (;;) {
        std::pair<LocalTask, std::shared_ptr<detail::TaskState>> item;
        {
            std::unique_lock lk(task_mu_);
            task_cv_.wait(lk, [&] { return workers_stop_ || !task_queue_.empty(); });
            if (task_queue_.empty()) {
                if (workers_stop_) return;
                continue;
            }
            item = std::move(task_queue_.front());
            task_queue_.pop_front();
        }
        std::string result;
        std::exception_ptr err;
        try {
            if (item.first.work) result = item.first.work();
        } catch (...) {
            err = std::current_exception();
        }
        {
            std::lock_guard lk(mu_);
            if (!err) mailbox_[item.second->agent].push_back(result);
        }
        {
            std::lock_guard hl(item.second->m);
            if (err) {
                item.second->error = err;
            } else {
                item.second->result = std::move(result);
            }
            item.second->ready = true;
        }
        item.second->cv.notify_all();
    }
}

void HttpGateway::resolve(const Pending& p, LlmResponse resp) {
    auto st = p.state;
    {
        std::lock_guard hl(st->m);
        st->response = std::move(resp);
        st->ready = true;
    }
    st->cv.notify_all();
}

void HttpGateway::resolve_error(const Pending& p, std::exception_ptr err) {
    auto st = p.state;
    {
        std::lock_guard hl(st->m);
        st->error = err;
        st->ready = true;
    }
    st->cv.notify_all();
    stats_.requests_total += 1;
}

void HttpGateway::update_epoll(Conn* c, uint32_t events) {
    epoll_event ev{};
    ev.events = events;
    ev.data.ptr = c;
    epoll_ctl(epfd_, EPOLL_CTL_MOD, c->fd, &ev);
}

bool HttpGateway::start_connect_locked(Conn* c) {
    c->fd = socket(AF_INET, SOCK_STREAM, 0);
    if (c->fd < 0) return false;
    fcntl(c->fd, F_SETFL, O_NONBLOCK);
    const int one = 1;
    setsockopt(c->fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<uint16_t>(http_.port));
    if (inet_pton(AF_INET, http_.host.c_str(), &addr.sin_addr) != 1) {
        hostent* he = gethostbyname(http_.host.c_str());
        if (!he || he->h_addrtype != AF_INET) {
            close(c->fd);
            c->fd = -1;
            return false;
        }
        std::memcpy(&addr.sin_addr, he->h_addr_list[0], sizeof(addr.sin_addr));
    }

    c->connect_started = clock_.now();
    const int rc = connect(c->fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr));
    if (rc != 0 && errno != EINPROGRESS) {
        close(c->fd);
        c->fd = -1;
        return false;
    }
    c->state = ConnState::connecting;
    epoll_event ev{};
    ev.events = EPOLLOUT;
    ev.data.ptr = c;
    epoll_ctl(epfd_, EPOLL_CTL_ADD, c->fd, &ev);
    return true;
}

void HttpGateway::begin_exchange_locked(Conn* c, Pending p) {
    const SimTime serialize_start = clock_.now();
    json body;
    body["model"] = http_.model;
    body["messages"] = json::array({{{"role", "user"}, {"content", p.req.prompt}}});
    body["temperature"] = http_.temperature;
    const std::string payload = body.dump();

    std::ostringstream os;
    os << "POST " << http_.path << " HTTP/1.1\r\n"
       << "Host: " << http_.host << ":" << http_.port << "\r\n"
       << "Content-Type: application/json\r\n";
    if (!api_key_.empty()) os << "Authorization: Bearer " << api_key_ << "\r\n";
    os << "Content-Length: " << payload.size() << "\r\n"
       << "Connection: " << (cfg_.reuse_connections ? "keep-alive" : "close") << "\r\n\r\n"
       << payload;

    c->current = std::move(p);
    c->busy = true;
    c->out = os.str();
    c->out_off = 0;
    c->in.clear();
    c->init_cost = clock_.now() - serialize_start;
    c->write_started = clock_.now();
    c->deadline = clock_.now() + http_.request_timeout;

    if (c->state == ConnState::idle) {
        c->state = ConnState::writing;
        update_epoll(c, EPOLLOUT);
    }
    // a connecting socket sends its request once EPOLLOUT reports success
}

void HttpGateway::dispatch_locked() {
    while (!queue_.empty()) {
        if (cfg_.mode == ScheduleMode::sequential) {
            bool any_busy = false;
            for (const auto& c : conns_) any_busy |= c.busy;
            if (any_busy) return;
        }
        Conn* target = nullptr;
        if (cfg_.reuse_connections && !idle_.empty()) {
            target = idle_.back();
            idle_.pop_back();
            stats_.connections_reused += 1;
            target->connect_cost = Duration{0};
        } else if (static_cast<int>(conns_.size()) < cfg_.pool_capacity) {
            conns_.emplace_back();
            target = &conns_.back();
            if (!start_connect_locked(target)) {
                conns_.pop_back();
                Pending p = queue_.top();
                queue_.pop();
                if (!p.retried) {
                    p.retried = true;
                    queue_.push(std::move(p));
                    continue;
                }
                resolve_error(p, std::make_exception_ptr(BackendError(
                                     p.req.request_id, "cannot connect to " + http_.host)));
                continue;
            }
            stats_.connections_created += 1;
        } else {
            return;  // pool exhausted; next completion re-dispatches
        }
        Pending p = queue_.top();
        queue_.pop();
        begin_exchange_locked(target, std::move(p));
    }
}

void HttpGateway::close_conn_locked(Conn* c, bool reusable) {
    if (!reusable || !cfg_.reuse_connections) {
        if (c->fd >= 0) {
            epoll_ctl(epfd_, EPOLL_CTL_DEL, c->fd, nullptr);
            close(c->fd);
        }
        for (auto it = idle_.begin(); it != idle_.end(); ++it) {
            if (*it == c) {
                idle_.erase(it);
                break;
            }
        }
        for (auto it = conns_.begin(); it != conns_.end(); ++it) {
            if (&*it == c) {
                conns_.erase(it);
                break;
            }
        }
        return;
    }
    c->busy = false;
    c->state = ConnState::idle;
    c->in.clear();
    c->out.clear();
    update_epoll(c, 0);
    idle_.push_back(c);
}

void HttpGateway::fail_exchange_locked(Conn* c, const std::string& why) {
    Pending p = std::move(c->current);
    const bool was_busy = c->busy;
    c->busy = false;
    close_conn_locked(c, false);
    if (!was_busy) return;
    if (!p.retried) {
        p.retried = true;  // single retry on transport failure
        queue_.push(std::move(p));
    } else {
        resolve_error(p, std::make_exception_ptr(BackendError(p.req.request_id, why)));
    }
    dispatch_locked();
}

void HttpGateway::finish_exchange_locked(Conn* c) {
    // parse status line, headers, body
    const std::string& raw = c->in;
    const size_t hdr_end = raw.find("\r\n\r\n");
    const size_t line_end = raw.find("\r\n");
    int status = 0;
    {
        std::istringstream ls(raw.substr(0, line_end));
        std::string httpver;
        ls >> httpver >> status;
    }
    std::string body = raw.substr(hdr_end + 4);

    Pending p = std::move(c->current);
    c->busy = false;

    bool server_wants_close = false;
    {
        std::string headers = raw.substr(0, hdr_end);
        for (auto& ch : headers) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        server_wants_close = headers.find("connection: close") != std::string::npos;
    }

    const Duration transfer_wait = clock_.now() - c->write_started;
    const Duration connect_cost = c->connect_cost;
    const Duration init_cost = c->init_cost;
    close_conn_locked(c, !server_wants_close);

    if (status < 200 || status >= 300) {
        if (!p.retried) {
            p.retried = true;
            queue_.push(std::move(p));
        } else {
            resolve_error(p, std::make_exception_ptr(
                                 BackendError(p.req.request_id, "http status " + std::to_string(status))));
        }
        dispatch_locked();
        return;
    }

    LlmResponse resp;
    resp.request_id = p.req.request_id;
    try {
        const json j = json::parse(body);
        resp.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
        if (j.contains("usage")) {
            resp.input_tokens = j["usage"].value("prompt_tokens", int64_t{0});
            resp.output_tokens = j["usage"].value("completion_tokens", int64_t{0});
        }
    } catch (const json::exception& e) {
        resolve_error(p, std::make_exception_ptr(
                             BackendError(p.req.request_id, std::string("bad response body: ") + e.what())));
        dispatch_locked();
        return;
    }
    if (resp.input_tokens == 0) resp.input_tokens = count_tokens(p.req.prompt);
    if (resp.output_tokens == 0) resp.output_tokens = count_tokens(resp.text);
    resp.timings.t_init = init_cost;
    resp.timings.t_connect = connect_cost;
    resp.timings.t_transfer_wait = transfer_wait;

    stats_.requests_total += 1;
    stats_.tokens_in_total += resp.input_tokens;
    stats_.tokens_out_total += resp.output_tokens;
    stats_.per_phase_sums += resp.timings;
    stats_.wall_time = clock_.now();

    resolve(p, std::move(resp));
    dispatch_locked();
}

void HttpGateway::handle_io_locked(Conn* c, uint32_t events) {
    if (events & (EPOLLERR | EPOLLHUP)) {
        if (c->busy && c->state == ConnState::reading && !c->in.empty()) {
            // server closed after sending: try to use what we have
            if (c->in.find("\r\n\r\n") != std::string::npos) {
                finish_exchange_locked(c);
                return;
            }
        }
        fail_exchange_locked(c, "connection error");
        return;
    }

    if (c->state == ConnState::connecting && (events & EPOLLOUT)) {
        int err = 0;
        socklen_t len = sizeof(err);
        getsockopt(c->fd, SOL_SOCKET, SO_ERROR, &err, &len);
        if (err != 0) {
            fail_exchange_locked(c, "connect failed: " + std::string(strerror(err)));
            return;
        }
        c->connect_cost = clock_.now() - c->connect_started;
        c->state = ConnState::writing;
    }

    if (c->state == ConnState::writing && (events & EPOLLOUT)) {
        while (c->out_off < c->out.size()) {
            const ssize_t n = send(c->fd, c->out.data() + c->out_off, c->out.size() - c->out_off,
                                   MSG_NOSIGNAL);
            if (n > 0) {
                c->out_off += static_cast<size_t>(n);
            } else if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) {
                return;  // wait for the next EPOLLOUT
            } else {
                fail_exchange_locked(c, "send failed");
                return;
            }
        }
        c->state = ConnState::reading;
        update_epoll(c, EPOLLIN);
    }

    if (c->state == ConnState::reading && (events & EPOLLIN)) {
        char buf[16384];
        for (;;) {
            const ssize_t n = recv(c->fd, buf, sizeof(buf), 0);
            if (n > 0) {
                c->in.append(buf, static_cast<size_t>(n));
            } else if (n == 0) {
                // EOF: complete only if the response was delimited by close
                if (c->in.find("\r\n\r\n") != std::string::npos) {
                    finish_exchange_locked(c);
                } else {
                    fail_exchange_locked(c, "connection closed mid-response");
                }
                return;
            } else if (errno == EAGAIN || errno == EWOULDBLOCK) {
                break;
            } else {
                fail_exchange_locked(c, "recv failed");
                return;
            }
        }
        // complete when Content-Length bytes of body have arrived
        const size_t hdr_end = c->in.find("\r\n\r\n");
        if (hdr_end == std::string::npos) return;
        std::string headers = c->in.substr(0, hdr_end);
        for (auto& ch : headers) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        const size_t clpos = headers.find("content-length:");
        if (clpos == std::string::npos) return;  // close-delimited; wait for EOF
        const size_t cl = std::stoul(headers.substr(clpos + 15));
        if (c->in.size() >= hdr_end + 4 + cl) finish_exchange_locked(c);
    }
}

void HttpGateway::io_loop() {
    epoll_event events[64];
    for (;;) {
        const int n = epoll_wait(epfd_, events, 64, 100);
        {
            std::lock_guard lk(mu_);
            if (closed_ && queue_.empty()) {
                bool any_busy = false;
                for (const auto& c : conns_) any_busy |= c.busy;
                if (!any_busy) return;
            }
            for (int i = 0; i < n; ++i) {
                if (events[i].data.ptr == nullptr) {
                    char buf[256];
                    while (read(wake_pipe_[0], buf, sizeof(buf)) > 0) {
                    }
                    continue;
                }
                handle_io_locked(static_cast<Conn*>(events[i].data.ptr), events[i].events);
            }
            // request timeouts
            const SimTime now = clock_.now();
            for (auto it = conns_.begin(); it != conns_.end();) {
                Conn* c = &*it;
                ++it;  // fail_exchange may erase the connection
                if (c->busy && now > c->deadline) fail_exchange_locked(c, "request timed out");
            }
            dispatch_locked();
        }
    }
}

void HttpGateway::shutdown() {
    {
        std::lock_guard lk(mu_);
        if (closed_) {
            return;
        }
        closed_ = true;
    }
    wake();
    if (io_thread_.joinable()) io_thread_.join();
    {
        std::lock_guard lk(task_mu_);
        workers_stop_ = true;
    }
    task_cv_.notify_all();
    for (auto& w : workers_) {
        if (w.joinable()) w.join();
    }
    std::lock_guard lk(mu_);
    for (auto& c : conns_) {
        if (c.fd >= 0) close(c.fd);
    }
    conns_.clear();
    idle_.clear();
    if (epfd_ >= 0) close(epfd_);
    if (wake_pipe_[0] >= 0) close(wake_pipe_[0]);
    if (wake_pipe_[1] >= 0) close(wake_pipe_[1]);
    epfd_ = -1;
}

}  // namespace opencity
