#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "opencity/gateway.hpp"
#include "opencity/prompts.hpp"
#include "opencity/types.hpp"

namespace opencity {

struct Group {
    GroupId group_id = -1;
    std::string description;         // D_g, generated at creation, never revised
    std::vector<AgentId> member_ids;
    std::string prototype_summary;   // compact form used in likelihood prompts
};

struct IplConfig {
    int bootstrap_count = 20;      // M
    double threshold = 0.7;        // T in (0,1)

    void validate() const;
};

struct OptimizerStats {
    int64_t groups_created = 0;
    int64_t fallback_batches = 0;    // distill batches retried as raw prompts
    int64_t likelihood_clamped = 0;  // out-of-range scores clamped after retry
};

struct LikelihoodLogEntry {
    AgentId agent;
    GroupId chosen;
    double best_score;
    bool created_new;
};

// Batched requests carry at most this many agents; larger groups are chunked.
inline constexpr size_t kMaxBatchAgents = 16;

// In-context prototype learning: LLM-driven incremental clustering of agents
// by their static attributes. Bootstraps on the first M profiles, then
// assigns the rest one by one: join the argmax group when its likelihood
// clears the threshold, otherwise open a new group. Sequential over agents
// by construction.
class Ipl {
public:
    Ipl(IplConfig cfg, Gateway& gw, RequestFactory& factory);

    // Groups the first M profiles in one request. Retries once on a reply
    // that fails the grouping schema, then throws UnparseableGrouping.
    void bootstrap(const std::vector<StaticProfile>& profiles);

    // Assigns one profile (creates the first group directly when none exist).
    GroupId assign(const StaticProfile& p);

    // bootstrap(first M) + assign(rest); idempotent per agent
    void ensure_assigned(const std::vector<StaticProfile>& profiles);

    const std::vector<Group>& groups() const { return groups_; }
    GroupId group_of(AgentId agent) const;
    bool assigned(AgentId agent) const { return membership_.count(agent) > 0; }
    const std::vector<LikelihoodLogEntry>& likelihood_log() const { return log_; }
    const OptimizerStats& stats() const { return stats_; }

    std::string groups_json() const;

private:
    GroupId create_group(const StaticProfile& founder);
    static std::string summary_of(const std::string& description);
    void record(AgentId agent, GroupId g);

    IplConfig cfg_;
    Gateway& gw_;
    RequestFactory& factory_;
    std::vector<Group> groups_;
    std::map<AgentId, GroupId> membership_;
    std::vector<LikelihoodLogEntry> log_;
    OptimizerStats stats_;
};

// --- distill assembly (pure helpers) ---------------------------------------

// Asks the backend to rewrite a raw prompt into a distill template for one
// group (summarize, extract context, share, rewrite). Throws DistillInvalid
// when the reply misses the required section or slot placeholder.
DistillMetaPrompt distill_meta_prompt(const RawPrompt& raw, const Group& group, Gateway& gw,
                                      RequestFactory& factory);

// Fills slots of a group's distill template into one batched request.
// Every agent must belong to the group; slot order defines response order.
LlmRequest assemble_batch(const Group& group,
                          const std::vector<std::pair<AgentId, std::vector<NamedSlot>>>& dynamics,
                          const DistillMetaPrompt& meta, RequestFactory& factory);

// Splits an enumerated answers reply back per agent; throws ArityMismatch
// when ids or counts do not line up with the request order.
std::map<AgentId, std::string> split_response(const LlmResponse& resp,
                                              const std::vector<AgentId>& group_order);

struct ReductionRates {
    double rr = 0.0;
    double tr = 0.0;
};

// Rr = 1 - requests_opt/requests_base, Tr = 1 - tokens_opt/tokens_base
// (input + output tokens). Throws ZeroBaseline.
ReductionRates reduction_rates(const GatewayStats& baseline, const GatewayStats& optimized);

// --- prompting strategies ---------------------------------------------------

struct DecisionIntent {
    AgentId agent = 0;
    RawPrompt raw;
};

enum class PromptingMode { raw, batch, archetype, group_distill };

PromptingMode prompting_mode_from_string(const std::string& s);
std::string to_string(PromptingMode m);

// Turns a tick's worth of decision intents into per-agent answers using one
// of the four prompting schemes. Raw issues one request per agent; batch
// concatenates full prompts; archetype answers once per group and reuses the
// representative's answer; group_distill shares function and group context
// while keeping per-agent dynamic slots.
class PromptStrategy {
public:
    PromptStrategy(PromptingMode mode, Gateway& gw, RequestFactory& factory, Ipl* ipl);

    std::map<AgentId, std::string> decide(const std::vector<DecisionIntent>& intents);

    OptimizerStats& stats() { return stats_; }
    PromptingMode mode() const { return mode_; }

private:
    std::map<AgentId, std::string> decide_raw(const std::vector<DecisionIntent>& intents);
    std::map<AgentId, std::string> decide_batch(const std::vector<DecisionIntent>& intents);
    std::map<AgentId, std::string> decide_grouped(const std::vector<DecisionIntent>& intents,
                                                  bool archetype);
    const DistillMetaPrompt& template_for(const Group& g, const RawPrompt& raw);

    PromptingMode mode_;
    Gateway& gw_;
    RequestFactory& factory_;
    Ipl* ipl_;
    OptimizerStats stats_;
    // distill templates cached per (group, task line)
    std::map<std::pair<GroupId, std::string>, DistillMetaPrompt> templates_;
};

}  // namespace opencity
