#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "opencity/types.hpp"

namespace opencity {

// One named dynamic slot of the variable section. Values are single-line;
// builders fold newlines into "; ".
struct NamedSlot {
    std::string name;
    std::string value;
};

// Three-part raw prompt: task instruction (function), per-agent dynamic
// slots (variables), static profile rendering (input). The sections are
// individually addressable so the distill rewrite can share the first and
// replace the last.
struct RawPrompt {
    std::string function_section;
    std::vector<NamedSlot> variable_section;
    std::string input_section;
};

// Distill template: shared instruction and group context plus ordered
// per-agent slots. Slot order defines the required response order.
struct DistillMetaPrompt {
    std::string shared_function;
    GroupId group_id = -1;
    std::string shared_context;
    std::vector<std::pair<AgentId, std::vector<NamedSlot>>> per_agent_slots;
};

// Slot value used when an agent has no content for a slot.
inline constexpr const char* kNoContextMarker = "(none)";

namespace prompts {

// --- builders -------------------------------------------------------------

std::string render_profile(const StaticProfile& p);

RawPrompt location_choice(const StaticProfile& p, const std::string& memory_excerpt,
                          const std::string& perceived_context,
                          const std::vector<PoiId>& candidates);
RawPrompt plan_day(const StaticProfile& p, const std::string& date);
RawPrompt reflect(const StaticProfile& p, const std::vector<std::string>& recent_memories);
RawPrompt interrogate(const StaticProfile& p, const std::string& question,
                      const std::vector<std::pair<int, std::string>>& retrieved_entries);

// --- rendering ------------------------------------------------------------

std::string render_raw(const RawPrompt& p, AgentId agent);
std::string render_batch(const std::vector<std::pair<AgentId, RawPrompt>>& prompts);
std::string render_distill(const DistillMetaPrompt& meta);

std::string render_grouping_request(const std::vector<StaticProfile>& profiles);
std::string render_likelihood_request(const StaticProfile& p,
                                      const std::vector<std::pair<GroupId, std::string>>& groups);
std::string render_describe_request(const std::vector<StaticProfile>& members);
std::string render_distill_gen_request(const RawPrompt& raw, GroupId group,
                                       const std::string& group_description);

// --- response formats -----------------------------------------------------

// "[OC-ANSWERS v1]" list; one answer per agent in request slot order.
std::string render_answers(const std::vector<std::pair<AgentId, std::string>>& answers);
std::vector<std::pair<AgentId, std::string>> parse_answers(const std::string& text);

struct ParsedGroup {
    GroupId group_id;
    std::string description;
    std::vector<AgentId> members;
};
std::string render_groups(const std::vector<ParsedGroup>& groups);
std::vector<ParsedGroup> parse_groups(const std::string& text);

// Likelihood replies are a flat JSON object {"<group_id>": score}.
std::map<GroupId, double> parse_likelihoods(const std::string& text);

// --- request-side parsing (mock backend) ----------------------------------

enum class PromptKind {
    raw,
    batch,
    distill,
    grouping,
    likelihood,
    describe,
    distill_gen,
    free_text,
};

struct ParsedAgentSection {
    AgentId agent = -1;
    std::string task;  // from "task:" line of the function section
    std::vector<NamedSlot> slots;
};

struct ParsedPrompt {
    PromptKind kind = PromptKind::free_text;
    std::vector<ParsedAgentSection> agents;   // raw: 1, batch/distill: k
    GroupId group_id = -1;                    // distill / distill_gen
    std::string group_description;            // distill / distill_gen
    std::vector<AgentId> listed_agents;       // grouping / describe / likelihood subject
    std::vector<std::pair<GroupId, std::string>> listed_groups;  // likelihood
    RawPrompt raw_template;                   // distill_gen payload
};

// Detects the schema tag and parses. A recognized tag with an unparseable
// body throws MalformedPrompt; no tag yields kind = free_text.
ParsedPrompt parse_prompt(const std::string& text);

// helpers shared with the mock backend
std::vector<PoiId> parse_candidates(const std::string& value);
std::string join_candidates(const std::vector<PoiId>& candidates);
std::optional<std::string> slot_value(const std::vector<NamedSlot>& slots, const std::string& name);

}  // namespace prompts
}  // namespace opencity
