#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "opencity/city.hpp"
#include "opencity/rng.hpp"
#include "opencity/types.hpp"

namespace opencity {

enum class MemoryKind { observation, plan, reflection };

struct MemoryEntry {
    SimTime time{0};
    MemoryKind kind = MemoryKind::observation;
    std::string text;
    int importance = 1;  // 1..10
    PoiId location = -1;
};

// Append-only within a tick; importance_accum runs since the last reflection.
struct MemoryStream {
    std::vector<MemoryEntry> entries;
    int importance_accum = 0;
    int reflect_threshold = 20;

    void append(MemoryEntry e) {
        importance_accum += e.importance;
        entries.push_back(std::move(e));
    }
    void note_reflected() { importance_accum = 0; }
    bool should_reflect() const { return importance_accum >= reflect_threshold; }
};

// 1..10 score from a fixed keyword table.
int importance_for(const std::string& text);

struct Intention {
    int start_min = 0;  // minutes from midnight
    int end_min = 0;
    std::string activity;
    std::string category;
};

struct DailyPlan {
    std::string date;
    std::vector<Intention> intentions;  // non-overlapping, within the day
};

// Plan line format: "HH:MM-HH:MM activity category / ...". Nullopt when the
// text does not parse into at least one valid, non-overlapping window.
std::optional<DailyPlan> parse_plan(const std::string& text, const std::string& date);

// home->work->home fallback used after two unparseable plan replies.
DailyPlan template_plan(const StaticProfile& p, const std::string& date);

// Eq. 1 carrier: static profile plus evolving memory, location, plan, wake
// time. Static fields never change across steps.
struct AgentState {
    StaticProfile profile;
    MemoryStream memory;
    PoiId location = -1;
    std::optional<DailyPlan> plan;
    size_t next_intention = 0;
    SimTime next_wake{0};

    // EPR bookkeeping (visit counts seed with home)
    std::map<PoiId, int64_t> visit_counts;
    int64_t distinct_visited = 0;
};

// rho: exploration rate, gamma: trade-off exponent, tau: waiting-time cutoff
// (hours), beta: waiting-time exponent.
struct EprParams {
    double rho = 0.6;
    double gamma = 0.21;
    double tau = 17.0;
    double beta = 0.8;
    bool distance_decay = false;  // deviation knob; off reproduces the plain model

    void validate() const;
};

double epr_explore_probability(const EprParams& p, int64_t distinct_visited);

// One EPR move: explore w.p. rho*S^(-gamma) (uniform over unvisited POIs, or
// distance-decayed when the knob is on), otherwise return to a visited
// location proportionally to visit counts. Updates the agent's visit state.
PoiId epr_step(AgentState& a, const City& city, Rng& rng, const EprParams& p);

// Inverse-CDF sampler on a tabulated grid for
// P(dt) ~ dt^(-1-beta) * exp(-dt/tau), dt in hours truncated to [0.25, 24].
class EprWaitSampler {
public:
    explicit EprWaitSampler(const EprParams& p, int grid_points = 4096);
    double sample_hours(Rng& rng) const;
    static constexpr double kMinHours = 0.25;
    static constexpr double kMaxHours = 24.0;

private:
    std::vector<double> grid_;
    std::vector<double> cdf_;
};

}  // namespace opencity
