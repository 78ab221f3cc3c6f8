#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "opencity/agent.hpp"
#include "opencity/city.hpp"
#include "opencity/http_gateway.hpp"
#include "opencity/ingest.hpp"
#include "opencity/latency.hpp"
#include "opencity/metrics.hpp"
#include "opencity/optimizer.hpp"
#include "opencity/sim.hpp"

namespace opencity {

enum class BackendKind { mock, http };

// Everything a run needs, loadable from JSON with CLI overrides on top.
struct RunConfig {
    std::string city;  // path to a city file or "synthetic:<blocks>x<pois>@<segregation>"
    int n_agents = 100;
    int n_archetypes = 20;
    std::string homes = "mix";  // mix | even
    AgentKind agent_kind = AgentKind::generative;
    PromptingMode optimizer = PromptingMode::group_distill;
    BackendKind backend = BackendKind::mock;
    ScheduleMode scheduler = ScheduleMode::async;
    uint64_t seed = 1;
    int days = 1;
    int tick_minutes = 15;
    int pool_capacity = 8;
    bool reuse_connections = true;
    int worker_count = 4;
    IplConfig ipl;
    LatencyModel latency;
    EprParams epr;
    int reflect_threshold = 20;
    double perception_radius_km = 1.0;
    int candidate_cap = 10;
    HttpBackendConfig http;

    static RunConfig from_json_file(const std::string& path);
    static RunConfig from_json(const std::string& text);
    std::string to_json() const;

    City load_city() const;
    std::vector<StaticProfile> make_population(const City& city) const;
};

// A finished run on disk: config.json, stats.json, metrics.json,
// trajs.jsonl, memories.jsonl, groups.json, events.jsonl, profiles.json.
struct RunRecord {
    std::string dir;
    RunConfig config;
    GatewayStats stats;
    metrics::MetricsReport report;

    static RunRecord load(const std::string& dir);
};

// Wiring for one run: gateway (+ backend), factory, optional IPL/strategy.
struct Runtime {
    std::shared_ptr<VirtualClock> virtual_clock;  // null for http
    std::unique_ptr<SimulatedBackend> mock;
    std::unique_ptr<Gateway> gateway;
    std::unique_ptr<RequestFactory> factory;
    std::unique_ptr<Ipl> ipl;
    std::unique_ptr<PromptStrategy> strategy;
};

Runtime make_runtime(const RunConfig& cfg, const std::vector<StaticProfile>& profiles);

// Runs the simulation and persists the run directory (created under
// runs_root). Returns the record; bit-identical outputs for identical
// (config, seed) under the mock backend.
RunRecord run_simulation(const RunConfig& cfg, const std::string& runs_root,
                         const std::string& dir_name = "");

struct BenchmarkReport {
    double baseline_seconds = 0.0;
    double optimized_seconds = 0.0;
    double speedup = 0.0;
    double seconds_per_agent = 0.0;
    double rr = 0.0;
    double tr = 0.0;
    GatewayStats baseline_stats;
    GatewayStats optimized_stats;
};

// Table-1 style comparison: same workload, baseline vs optimized configs that
// may differ only in optimizer/scheduler/reuse/pool/worker knobs.
BenchmarkReport run_benchmark(const RunConfig& optimized, const RunConfig& baseline);

struct FaithfulnessResult {
    double jsd_mean = 0.0;
    double jsd_std = 0.0;
    double t1 = 0.0;            // vs the raw reference mode
    double equality_rate = 0.0; // per-decision exact match with raw
    int64_t requests = 0;
    int64_t tokens = 0;
};

struct FaithfulnessSetup {
    int n_agents = 100;
    int reps = 100;
    int n_candidates = 8;
    int n_archetypes = 10;
    uint64_t seed = 1;
};

// Table-2 protocol: the same location-selection context repeated; per-agent
// selection distributions compared to the raw-prompt reference.
FaithfulnessResult faithfulness_experiment(PromptingMode method, const FaithfulnessSetup& setup);

struct CounterfactualResult {
    std::vector<double> s_original;  // per visited block
    std::vector<double> s_even;
    double mean_original = 0.0;
    double mean_even = 0.0;
};

// Even-income counterfactual on EPR agents with fixed homes.
CounterfactualResult counterfactual_even_income(const RunConfig& cfg);

struct InterrogateAnswer {
    std::string text;
    std::vector<int> cited_entries;
};

// Q&A against a finished run: top-k memory retrieval by keyword overlap
// (k = 8), rendered with the static profile.
InterrogateAnswer interrogate(const RunRecord& run, AgentId agent, const std::string& question);

enum class ReportFormat { json, markdown, svg_plots };

// Writes report files into the run directory; returns the paths written.
std::vector<std::string> emit_report(const RunRecord& run, ReportFormat format);

// serialization helpers shared by run persistence and the CLI
std::string trajectories_to_jsonl(const std::vector<Trajectory>& trajs);
std::vector<Trajectory> trajectories_from_jsonl(const std::string& text, const City& city);
std::string memories_to_jsonl(const std::vector<std::vector<MemoryEntry>>& memories,
                              const std::vector<AgentId>& ids);
std::string stats_to_json(const GatewayStats& s);
GatewayStats stats_from_json(const std::string& text);

}  // namespace opencity
