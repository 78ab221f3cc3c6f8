#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "opencity/clock.hpp"

namespace opencity {

using AgentId = int32_t;
using PoiId = int32_t;
using BlockId = int32_t;
using GroupId = int32_t;
using RequestId = uint64_t;

// Static agent properties s_i. Immutable for the whole run.
struct StaticProfile {
    AgentId agent_id = 0;
    int age = 0;
    std::string gender;
    std::string occupation;
    std::string education;
    int income_quintile = 1;  // 1..5
    BlockId home_block = 0;

    bool valid() const { return income_quintile >= 1 && income_quintile <= 5 && age >= 0; }
};

// Per-request phase decomposition: initialization/reception, TCP
// establishment+teardown (zero on a pooled reuse), transmission plus server
// wait.
struct PhaseTimings {
    Duration t_init{0};
    Duration t_connect{0};
    Duration t_transfer_wait{0};

    PhaseTimings& operator+=(const PhaseTimings& o) {
        t_init += o.t_init;
        t_connect += o.t_connect;
        t_transfer_wait += o.t_transfer_wait;
        return *this;
    }
    bool operator==(const PhaseTimings&) const = default;
};

// The scheduled unit of gateway traffic. agent_ids has one entry for plain
// requests and the batch members, in slot order, for distill requests.
struct LlmRequest {
    RequestId request_id = 0;
    std::vector<AgentId> agent_ids;
    std::string prompt;
    int64_t est_input_tokens = 0;
    SimTime created_at{0};
};

struct LlmResponse {
    RequestId request_id = 0;
    std::string text;
    int64_t input_tokens = 0;
    int64_t output_tokens = 0;
    PhaseTimings timings;
};

enum class LocalTaskKind { memory_update, spatial_query, other };

// CPU work offloaded off the dispatch path. `work` carries the actual
// computation; `virtual_cost` is its simulated duration under the virtual
// clock.
struct LocalTask {
    uint64_t task_id = 0;
    AgentId agent_id = 0;
    LocalTaskKind kind = LocalTaskKind::other;
    Duration virtual_cost{0};
    std::function<std::string()> work;
};

struct GatewayStats {
    int64_t requests_total = 0;
    int64_t tokens_in_total = 0;
    int64_t tokens_out_total = 0;
    int64_t connections_created = 0;
    int64_t connections_reused = 0;
    Duration wall_time{0};
    PhaseTimings per_phase_sums;

    bool operator==(const GatewayStats&) const = default;
};

}  // namespace opencity
