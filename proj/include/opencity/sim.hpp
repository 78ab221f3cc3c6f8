#pragma once

#include <memory>
#include <string>
#include <vector>

#include "opencity/agent.hpp"
#include "opencity/city.hpp"
#include "opencity/gateway.hpp"
#include "opencity/optimizer.hpp"

namespace opencity {

enum class AgentKind { generative, epr };

AgentKind agent_kind_from_string(const std::string& s);
std::string to_string(AgentKind k);

struct SimConfig {
    int days = 1;
    int tick_minutes = 15;
    AgentKind agent_kind = AgentKind::generative;
    uint64_t seed = 1;
    double perception_radius_km = 1.0;
    int candidate_cap = 10;
    int reflect_threshold = 20;
    EprParams epr;
    Duration spatial_query_cost = ms(1);
    Duration memory_update_cost = ms(2);
};

struct SimOutputs {
    std::vector<Trajectory> trajectories;           // one per agent, id order
    std::vector<std::vector<MemoryEntry>> memories; // per agent, id order
    GatewayStats gateway_stats;
    OptimizerStats optimizer_stats;
    std::vector<std::string> event_log;
};

// Bulk-synchronous tick engine. Agents advance in deterministic id order
// within a tick; their LLM decisions are issued concurrently through the
// gateway and joined at tick end. EPR agents never touch the gateway.
class Simulation {
public:
    Simulation(SimConfig cfg, const City& city, std::vector<StaticProfile> profiles,
               Gateway& gw, RequestFactory& factory, PromptStrategy* strategy);

    SimOutputs run();

    // single-tick driving for tests
    void advance_tick();
    SimTime now() const { return SimTime{int64_t(tick_) * cfg_.tick_minutes * 60'000'000}; }
    int ticks_total() const;
    const std::vector<AgentState>& agents() const { return agents_; }
    AgentState& agent(size_t i) { return agents_[i]; }
    const std::vector<Trajectory>& trajectories() const { return trajectories_; }
    const std::vector<std::string>& event_log() const { return events_; }

    // deterministic home POI for a profile (lowest-jitter pick inside the block)
    static PoiId home_poi(const City& city, const StaticProfile& p, uint64_t seed);

private:
    struct Acting {
        size_t idx;
        Intention intention;
        std::vector<PoiId> candidates;
    };

    void plan_phase(const std::string& date);
    void move_home_if_done(size_t idx);
    void record_point(size_t idx, PoiId poi);
    void append_observation(size_t idx, const std::string& text, PoiId poi);
    void schedule_next(size_t idx, SimTime t);
    void reflect_phase();
    void generative_tick();
    void epr_tick();
    size_t index_of(AgentId id) const;

    SimConfig cfg_;
    const City& city_;
    Gateway& gw_;
    RequestFactory& factory_;
    PromptStrategy* strategy_;

    std::vector<AgentState> agents_;
    std::map<AgentId, size_t> index_;
    std::vector<PoiId> homes_;
    std::vector<Trajectory> trajectories_;
    std::vector<Rng> agent_rngs_;
    std::unique_ptr<EprWaitSampler> wait_sampler_;
    std::vector<std::string> events_;
    int tick_ = 0;
    uint64_t next_task_id_ = 1;
};

}  // namespace opencity
