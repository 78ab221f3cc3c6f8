#include <doctest.h>

#include <atomic>
#include <set>
#include <thread>

#include "opencity/backend.hpp"
#include "opencity/gateway.hpp"
#include "opencity/rng.hpp"
#include "opencity/tokens.hpp"

#include "oracles.hpp"

using namespace opencity;
using opencity::test::PoolOracleParams;
using opencity::test::pool_oracle_makespan_ms;

namespace {

// Fixed-wait backend: scheduling tests do not depend on reply content.
class FixedWaitBackend : public SimulatedBackend {
public:
    explicit FixedWaitBackend(LatencyModel lm) : lm_(lm) {}
    SimulatedReply simulate(const LlmRequest& req) override {
        if (fail_remaining_ > 0) {
            --fail_remaining_;
            throw BackendError(req.request_id, "injected failure");
        }
        SimulatedReply r;
        r.text = "ok";
        r.input_tokens = req.est_input_tokens;
        r.output_tokens = 1;
        r.wait = lm_.t_wait_base;  // per-token term disabled for scheduling tests
        return r;
    }
    const LatencyModel& latency() const override { return lm_; }
    void fail_next(int n) { fail_remaining_ = n; }

private:
    LatencyModel lm_;
    int fail_remaining_ = 0;
};

LatencyModel bench_latency() {
    LatencyModel lm;
    lm.t_init = ms(5);
    lm.t_connect = ms(20);
    lm.t_teardown = ms(0);
    lm.t_wait_base = ms(200);
    lm.t_per_token = us(0);
    return lm;
}

LlmRequest simple_req(RequestId id, SimTime at = SimTime{0}) {
    LlmRequest r;
    r.request_id = id;
    r.agent_ids = {static_cast<AgentId>(id)};
    r.prompt = "ping " + std::to_string(id);
    r.est_input_tokens = 2;
    r.created_at = at;
    return r;
}

struct Rig {
    std::shared_ptr<VirtualClock> clock = std::make_shared<VirtualClock>();
    FixedWaitBackend backend{bench_latency()};
    std::unique_ptr<VirtualGateway> gw;

    explicit Rig(GatewayConfig cfg = {}) { gw = std::make_unique<VirtualGateway>(cfg, clock, backend); }
};

double run_makespan_ms(int n, GatewayConfig cfg) {
    Rig rig(cfg);
    std::vector<ResponseHandle> handles;
    handles.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) handles.push_back(rig.gw->submit(simple_req(static_cast<RequestId>(i + 1))));
    for (auto& h : handles) (void)rig.gw->await_response(h);
    return static_cast<double>(rig.clock->now().count()) / 1000.0;
}

}  // namespace

TEST_CASE("single request resolves with the configured wait") {
    Rig rig;
    auto h = rig.gw->submit(simple_req(1));
    const LlmResponse resp = rig.gw->await_response(h);
    CHECK(resp.request_id == 1);
    CHECK(resp.timings.t_transfer_wait == ms(200));
    CHECK(resp.timings.t_connect == ms(20));  // fresh connection
    CHECK(resp.timings.t_init == ms(5));
}

TEST_CASE("100 concurrent requests on capacity 8 beat the sequential bound and match the oracle") {
    GatewayConfig cfg;
    cfg.pool_capacity = 8;
    const double makespan = run_makespan_ms(100, cfg);
    CHECK(makespan < 100 * 225.0);  // strictly less than sequential
    const double oracle = pool_oracle_makespan_ms(100, PoolOracleParams{8, true, false, 5, 20, 200});
    CHECK(makespan == doctest::Approx(oracle).epsilon(0.05));
}

TEST_CASE("overlap property holds for N x C grid, matching the discrete-event oracle") {
    for (int n : {1, 10, 100}) {
        for (int c : {1, 4, 8}) {
            GatewayConfig cfg;
            cfg.pool_capacity = c;
            const double makespan = run_makespan_ms(n, cfg);
            const double oracle =
                pool_oracle_makespan_ms(n, PoolOracleParams{c, true, false, 5, 20, 200});
            const double bound = n * 5.0 + std::ceil(double(n) / c) * 200.0 + c * 20.0;
            INFO("n=" << n << " c=" << c << " makespan=" << makespan << " oracle=" << oracle);
            CHECK(makespan == doctest::Approx(oracle).epsilon(0.05));
            CHECK(makespan <= bound * 1.05 + 1.0);
        }
    }
}

TEST_CASE("sequential mode serializes requests end-to-end") {
    GatewayConfig cfg;
    cfg.mode = ScheduleMode::sequential;
    cfg.reuse_connections = false;
    const double makespan = run_makespan_ms(10, cfg);
    CHECK(makespan == doctest::Approx(10 * 225.0).epsilon(1e-9));
}

TEST_CASE("connection reuse: sum of connect phases and created counts") {
    const int n = 50;
    {
        GatewayConfig cfg;
        cfg.pool_capacity = 8;
        cfg.reuse_connections = true;
        Rig rig(cfg);
        std::vector<ResponseHandle> hs;
        for (int i = 0; i < n; ++i) hs.push_back(rig.gw->submit(simple_req(static_cast<RequestId>(i + 1))));
        Duration connect_sum{0};
        for (auto& h : hs) connect_sum += rig.gw->await_response(h).timings.t_connect;
        const auto stats = rig.gw->gateway_stats();
        CHECK(stats.connections_created <= 8);
        CHECK(connect_sum == ms(20) * stats.connections_created);
        CHECK(connect_sum <= ms(20 * 8));
        CHECK(stats.connections_created + stats.connections_reused >= n);
        CHECK(rig.gw->debug_max_concurrent_connections() <= 8);
    }
    {
        GatewayConfig cfg;
        cfg.pool_capacity = 8;
        cfg.reuse_connections = false;
        Rig rig(cfg);
        std::vector<ResponseHandle> hs;
        for (int i = 0; i < n; ++i) hs.push_back(rig.gw->submit(simple_req(static_cast<RequestId>(i + 1))));
        Duration connect_sum{0};
        for (auto& h : hs) connect_sum += rig.gw->await_response(h).timings.t_connect;
        const auto stats = rig.gw->gateway_stats();
        CHECK(stats.connections_created == n);  // reuse disabled: one per request
        CHECK(connect_sum == ms(20) * n);
    }
}

TEST_CASE("stats start at zero and grow monotonically") {
    Rig rig;
    const auto s0 = rig.gw->gateway_stats();
    CHECK(s0.requests_total == 0);
    CHECK(s0.tokens_in_total == 0);
    CHECK(s0.connections_created == 0);

    auto h = rig.gw->submit(simple_req(1));
    (void)rig.gw->await_response(h);
    const auto s1 = rig.gw->gateway_stats();
    CHECK(s1.requests_total == 1);
    CHECK(s1.tokens_in_total == 2);
    CHECK(s1.tokens_out_total == 1);
}

TEST_CASE("lifecycle: submit after shutdown, double await, empty handle") {
    Rig rig;
    auto h = rig.gw->submit(simple_req(1));
    (void)rig.gw->await_response(h);
    CHECK_THROWS_AS((void)rig.gw->await_response(h), HandleConsumed);

    rig.gw->shutdown();
    CHECK_THROWS_AS(rig.gw->submit(simple_req(2)), GatewayClosed);
    CHECK_THROWS_AS(rig.gw->offload_local_task(LocalTask{}), WorkerPoolClosed);
}

TEST_CASE("backend failure: one retry, then BackendError carrying the request id") {
    Rig rig;
    rig.backend.fail_next(1);  // first attempt fails, retry succeeds
    auto h1 = rig.gw->submit(simple_req(7));
    CHECK(rig.gw->await_response(h1).request_id == 7);

    rig.backend.fail_next(2);  // both attempts fail
    auto h2 = rig.gw->submit(simple_req(8));
    try {
        (void)rig.gw->await_response(h2);
        FAIL("expected BackendError");
    } catch (const BackendError& e) {
        CHECK(e.request_id == 8);
    }
}

TEST_CASE("no request loss over randomized schedules") {
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        Rng rng(seed);
        GatewayConfig cfg;
        cfg.pool_capacity = 1 + static_cast<int>(rng.below(8));
        cfg.reuse_connections = rng.below(2) == 0;
        Rig rig(cfg);
        const int n = 300;
        std::vector<ResponseHandle> hs;
        for (int i = 0; i < n; ++i) {
            LlmRequest r = simple_req(static_cast<RequestId>(i + 1), ms(static_cast<int64_t>(rng.below(500))));
            hs.push_back(rig.gw->submit(std::move(r)));
        }
        std::set<RequestId> resolved;
        for (auto& h : hs) resolved.insert(rig.gw->await_response(h).request_id);
        CHECK(resolved.size() == static_cast<size_t>(n));  // exactly one response each
    }
}

TEST_CASE("dispatch order is FIFO by created_at with request_id tiebreak") {
    GatewayConfig cfg;
    cfg.pool_capacity = 1;
    Rig rig(cfg);
    // submitted out of order; created_at decides
    auto h3 = rig.gw->submit(simple_req(3, ms(30)));
    auto h1 = rig.gw->submit(simple_req(1, ms(10)));
    auto h2 = rig.gw->submit(simple_req(2, ms(10)));
    (void)rig.gw->await_response(h3);
    (void)rig.gw->await_response(h1);
    (void)rig.gw->await_response(h2);
    const auto log = rig.gw->debug_dispatch_log();
    REQUIRE(log.size() == 3);
    CHECK(log[0].first == 1);
    CHECK(log[1].first == 2);
    CHECK(log[2].first == 3);
}

TEST_CASE("offload: local tasks do not delay request dispatch") {
    auto dispatch_times = [&](bool with_task) {
        Rig rig;
        if (with_task) {
            LocalTask t;
            t.task_id = 1;
            t.agent_id = 0;
            t.kind = LocalTaskKind::memory_update;
            t.virtual_cost = ms(50);
            t.work = [] { return std::string("done"); };
            (void)rig.gw->offload_local_task(std::move(t));
        }
        std::vector<ResponseHandle> hs;
        for (int i = 0; i < 10; ++i) hs.push_back(rig.gw->submit(simple_req(static_cast<RequestId>(i + 1))));
        for (auto& h : hs) (void)rig.gw->await_response(h);
        return rig.gw->debug_dispatch_log();
    };
    const auto without = dispatch_times(false);
    const auto with = dispatch_times(true);
    REQUIRE(without.size() == with.size());
    for (size_t i = 0; i < with.size(); ++i) {
        CHECK(with[i].first == without[i].first);
        CHECK(with[i].second == without[i].second);  // identical dispatch instants
    }
}

TEST_CASE("offload property: B of task work on W workers adds at most B/W plus jitter") {
    GatewayConfig cfg;
    cfg.worker_count = 4;
    const int n_tasks = 40;
    const Duration task_cost = ms(30);  // B = 1200ms, B/W = 300ms
    auto makespan = [&](bool with_tasks) {
        Rig rig(cfg);
        std::vector<TaskHandle> ths;
        if (with_tasks) {
            for (int i = 0; i < n_tasks; ++i) {
                LocalTask t;
                t.task_id = static_cast<uint64_t>(i + 1);
                t.agent_id = i % 5;
                t.virtual_cost = task_cost;
                t.work = [] { return std::string("x"); };
                ths.push_back(rig.gw->offload_local_task(std::move(t)));
            }
        }
        std::vector<ResponseHandle> hs;
        for (int i = 0; i < 20; ++i) hs.push_back(rig.gw->submit(simple_req(static_cast<RequestId>(i + 1))));
        for (auto& h : hs) (void)rig.gw->await_response(h);
        for (auto& t : ths) (void)rig.gw->await_task(t);
        return static_cast<double>(rig.clock->now().count()) / 1000.0;
    };
    const double base = makespan(false);
    const double loaded = makespan(true);
    const double budget = base + (n_tasks * 30.0) / cfg.worker_count;
    CHECK(loaded <= budget * 1.05 + 1.0);
    CHECK(loaded < base + n_tasks * 30.0);  // never serializes the full B
}

TEST_CASE("1000 local tasks on 4 workers all complete; results reach the mailbox") {
    GatewayConfig cfg;
    cfg.worker_count = 4;
    Rig rig(cfg);
    std::vector<TaskHandle> ths;
    for (int i = 0; i < 1000; ++i) {
        LocalTask t;
        t.task_id = static_cast<uint64_t>(i + 1);
        t.agent_id = i % 7;
        t.kind = LocalTaskKind::spatial_query;
        t.virtual_cost = ms(1);
        t.work = [i] { return std::to_string(i); };
        ths.push_back(rig.gw->offload_local_task(std::move(t)));
    }
    for (auto& t : ths) (void)rig.gw->await_task(t);
    size_t mailbox_total = 0;
    for (AgentId a = 0; a < 7; ++a) mailbox_total += rig.gw->drain_mailbox(a).size();
    CHECK(mailbox_total == 1000);
}

TEST_CASE("deterministic stats across identical runs") {
    auto run = [] {
        GatewayConfig cfg;
        cfg.pool_capacity = 4;
        Rig rig(cfg);
        std::vector<ResponseHandle> hs;
        for (int i = 0; i < 120; ++i)
            hs.push_back(rig.gw->submit(simple_req(static_cast<RequestId>(i + 1), ms(i % 7))));
        for (auto& h : hs) (void)rig.gw->await_response(h);
        return rig.gw->gateway_stats();
    };
    CHECK((run() == run()));
}

TEST_CASE("concurrent submits from multiple threads are safe") {
    GatewayConfig cfg;
    cfg.pool_capacity = 4;
    Rig rig(cfg);
    std::atomic<int> resolved{0};
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t) {
        threads.emplace_back([&, t] {
            for (int i = 0; i < 50; ++i) {
                auto h = rig.gw->submit(simple_req(static_cast<RequestId>(t * 1000 + i + 1)));
                (void)rig.gw->await_response(h);
                resolved.fetch_add(1);
            }
        });
    }
    for (auto& th : threads) th.join();
    CHECK(resolved.load() == 200);
    CHECK(rig.gw->gateway_stats().requests_total == 200);
}
