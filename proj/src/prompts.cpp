#include "opencity/prompts.hpp"

#include <algorithm>
#include <sstream>

#include <json.hpp>

#include "opencity/errors.hpp"

namespace opencity::prompts {

namespace {

constexpr const char* kRawTag = "[OC-RAW v1]";
constexpr const char* kBatchTag = "[OC-BATCH v1]";
constexpr const char* kDistillTag = "[OC-DISTILL v1]";
constexpr const char* kGroupingTag = "[OC-GROUPING v1]";
constexpr const char* kLikelihoodTag = "[OC-LIKELIHOOD v1]";
constexpr const char* kDescribeTag = "[OC-DESCRIBE v1]";
constexpr const char* kDistillGenTag = "[OC-DISTILL-GEN v1]";
constexpr const char* kAnswersTag = "[OC-ANSWERS v1]";
constexpr const char* kGroupsTag = "[OC-GROUPS v1]";

std::string trim(std::string_view s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string cur;
    for (char c : text) {
        if (c == '\n') {
            lines.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) lines.push_back(cur);
    return lines;
}

bool starts_with(const std::string& s, std::string_view prefix) {
    return s.size() >= prefix.size() && s.compare(0, prefix.size(), prefix) == 0;
}

// single-line fold: slot values must not contain newlines
std::string fold(std::string s) {
    std::string out;
    for (char c : s) out += (c == '\n') ? ';' : c;
    return out;
}

long parse_long(const std::string& s, const char* what) {
    try {
        size_t pos = 0;
        long v = std::stol(trim(s), &pos);
        return v;
    } catch (const std::exception&) {
        throw MalformedPrompt(std::string("expected integer for ") + what + ", got '" + s + "'");
    }
}

std::string section_body(const std::vector<std::string>& lines, size_t& i) {
    std::string body;
    while (i < lines.size() && !starts_with(lines[i], "## ") && !starts_with(lines[i], "=== ")) {
        if (!body.empty()) body += "\n";
        body += lines[i];
        ++i;
    }
    return trim(body);
}

std::string task_of(const std::string& function_section) {
    const auto lines = split_lines(function_section + "\n");
    for (const auto& l : lines) {
        if (starts_with(l, "task:")) return trim(l.substr(5));
    }
    return "";
}

// parses "- agent: N" blocks with indented "  key: value" slot lines
std::vector<ParsedAgentSection> parse_slot_blocks(const std::vector<std::string>& lines, size_t& i) {
    std::vector<ParsedAgentSection> out;
    while (i < lines.size()) {
        const std::string line = lines[i];
        if (starts_with(line, "- agent:")) {
            ParsedAgentSection sec;
            sec.agent = static_cast<AgentId>(parse_long(line.substr(8), "agent id"));
            ++i;
            while (i < lines.size() && starts_with(lines[i], "  ")) {
                const std::string body = trim(lines[i]);
                const size_t colon = body.find(':');
                if (colon == std::string::npos) throw MalformedPrompt("slot line without ':': " + body);
                sec.slots.push_back({trim(body.substr(0, colon)), trim(body.substr(colon + 1))});
                ++i;
            }
            out.push_back(std::move(sec));
        } else if (trim(line).empty()) {
            ++i;
        } else {
            break;
        }
    }
    return out;
}

void render_slots(std::ostringstream& os, const std::vector<NamedSlot>& slots) {
    for (const auto& s : slots) {
        os << "  " << s.name << ": " << (s.value.empty() ? kNoContextMarker : fold(s.value)) << "\n";
    }
}

}  // namespace

std::string render_profile(const StaticProfile& p) {
    std::ostringstream os;
    os << "You are a " << p.age << " year old " << p.gender << " " << p.occupation << " with "
       << p.education << " education, in income quintile " << p.income_quintile
       << " of 5, living in block " << p.home_block << " of the city.";
    return os.str();
}

RawPrompt location_choice(const StaticProfile& p, const std::string& memory_excerpt,
                          const std::string& perceived_context,
                          const std::vector<PoiId>& candidates) {
    RawPrompt raw;
    raw.function_section =
        "task: choose-location\n"
        "Decide which venue this resident visits next. Consider how the resident profile, "
        "the current situation and the memory excerpt shape the preference, pick the single "
        "most fitting venue from the candidate list, and reply with exactly one candidate id "
        "per resident in the answers format.";
    raw.input_section = render_profile(p);
    raw.variable_section = {
        {"memory", memory_excerpt},
        {"context", perceived_context},
        {"candidates", join_candidates(candidates)},
    };
    return raw;
}

RawPrompt plan_day(const StaticProfile& p, const std::string& date) {
    RawPrompt raw;
    raw.function_section =
        "task: plan-day\n"
        "Draft a daily activity schedule for this resident as ordered, non-overlapping time "
        "windows that fit the profile and routine. Each window names an activity and a venue "
        "category. Reply one line per resident: windows separated by ' / ', each window "
        "written as HH:MM-HH:MM activity category.";
    raw.input_section = render_profile(p);
    raw.variable_section = {{"date", date}};
    return raw;
}

RawPrompt reflect(const StaticProfile& p, const std::vector<std::string>& recent_memories) {
    RawPrompt raw;
    raw.function_section =
        "task: reflect\n"
        "Distill one to three general insights about habits or preferences from the recent "
        "memory entries of this resident. Reply a single line per resident with insights "
        "separated by ' | '.";
    raw.input_section = render_profile(p);
    std::string joined;
    for (const auto& m : recent_memories) {
        if (!joined.empty()) joined += "; ";
        joined += m;
    }
    raw.variable_section = {{"recent", joined}};
    return raw;
}

RawPrompt interrogate(const StaticProfile& p, const std::string& question,
                      const std::vector<std::pair<int, std::string>>& retrieved_entries) {
    RawPrompt raw;
    raw.function_section =
        "task: interrogate\n"
        "Answer the interviewer's question in first person using only the retrieved memory "
        "entries and the profile. Cite the entry ids you used in square brackets.";
    raw.input_section = render_profile(p);
    std::string entries;
    for (const auto& [id, text] : retrieved_entries) {
        if (!entries.empty()) entries += " | ";
        entries += "[" + std::to_string(id) + "] " + text;
    }
    raw.variable_section = {{"question", question}, {"entries", entries}};
    return raw;
}

std::string render_raw(const RawPrompt& p, AgentId agent) {
    std::ostringstream os;
    os << kRawTag << "\n## Function\n"
       << p.function_section << "\n## Input\nagent: " << agent << "\n"
       << p.input_section << "\n## Variables\n";
    // variables render as a slot block so raw and distill share one parser
    os << "- agent: " << agent << "\n";
    render_slots(os, p.variable_section);
    return os.str();
}

std::string render_batch(const std::vector<std::pair<AgentId, RawPrompt>>& prompts) {
    std::ostringstream os;
    os << kBatchTag << "\n";
    for (const auto& [agent, p] : prompts) {
        os << "=== agent " << agent << " ===\n"
           << "## Function\n"
           << p.function_section << "\n## Input\nagent: " << agent << "\n"
           << p.input_section << "\n## Variables\n"
           << "- agent: " << agent << "\n";
        render_slots(os, p.variable_section);
    }
    return os.str();
}

std::string render_distill(const DistillMetaPrompt& meta) {
    std::ostringstream os;
    os << kDistillTag << "\n## Function (shared)\n"
       << meta.shared_function << "\n## Group\ngroup: " << meta.group_id
       << "\ndescription: " << fold(meta.shared_context) << "\n## Slots\n";
    for (const auto& [agent, slots] : meta.per_agent_slots) {
        os << "- agent: " << agent << "\n";
        render_slots(os, slots);
    }
    return os.str();
}

std::string render_grouping_request(const std::vector<StaticProfile>& profiles) {
    std::ostringstream os;
    os << kGroupingTag << "\n"
       << "Partition the following residents into groups of residents with similar static "
          "attributes and describe the shared characteristics of each group.\n";
    for (const auto& p : profiles) {
        os << "- agent: " << p.agent_id << "\n  profile: " << fold(render_profile(p)) << "\n";
    }
    return os.str();
}

std::string render_likelihood_request(const StaticProfile& p,
                                      const std::vector<std::pair<GroupId, std::string>>& groups) {
    std::ostringstream os;
    os << kLikelihoodTag << "\nagent: " << p.agent_id << "\nprofile: " << fold(render_profile(p))
       << "\ngroups:\n";
    for (const auto& [gid, summary] : groups) {
        os << "- group: " << gid << "\n  summary: " << fold(summary) << "\n";
    }
    os << "Score the likelihood that the resident belongs to each group as a JSON object "
          "mapping group id to a score in [0,1].\n";
    return os.str();
}

std::string render_describe_request(const std::vector<StaticProfile>& members) {
    std::ostringstream os;
    os << kDescribeTag << "\nSummarize the shared characteristics of these residents in one "
          "sentence.\n";
    for (const auto& p : members) {
        os << "- agent: " << p.agent_id << "\n  profile: " << fold(render_profile(p)) << "\n";
    }
    return os.str();
}

std::string render_distill_gen_request(const RawPrompt& raw, GroupId group,
                                       const std::string& group_description) {
    std::ostringstream os;
    os << kDistillGenTag << "\ngroup: " << group << "\ndescription: " << fold(group_description)
       << "\n## Function\n"
       << raw.function_section << "\n## Variables\n";
    for (const auto& s : raw.variable_section) os << "- " << s.name << "\n";
    os << "## Input\n"
       << raw.input_section << "\n"
       << "Rewrite the prompt above into a distill meta-prompt: summarize the task, extract "
          "the shared context, replace the static input with the group description, and keep "
          "one variable slot block per agent.\n";
    return os.str();
}

std::string render_answers(const std::vector<std::pair<AgentId, std::string>>& answers) {
    std::ostringstream os;
    os << kAnswersTag << "\n";
    for (const auto& [agent, text] : answers) {
        os << "- agent: " << agent << "\n  answer: " << fold(text) << "\n";
    }
    return os.str();
}

std::vector<std::pair<AgentId, std::string>> parse_answers(const std::string& text) {
    const auto lines = split_lines(text);
    if (lines.empty() || trim(lines[0]) != kAnswersTag)
        throw MalformedPrompt("missing answers tag");
    size_t i = 1;
    auto blocks = parse_slot_blocks(lines, i);
    std::vector<std::pair<AgentId, std::string>> out;
    for (auto& b : blocks) {
        auto v = slot_value(b.slots, "answer");
        if (!v) throw MalformedPrompt("answer block without 'answer:' line");
        out.emplace_back(b.agent, *v);
    }
    return out;
}

std::string render_groups(const std::vector<ParsedGroup>& groups) {
    std::ostringstream os;
    os << kGroupsTag << "\n";
    for (const auto& g : groups) {
        os << "- group: " << g.group_id << "\n  description: " << fold(g.description)
           << "\n  members: ";
        for (size_t i = 0; i < g.members.size(); ++i) {
            if (i) os << ", ";
            os << g.members[i];
        }
        os << "\n";
    }
    return os.str();
}

std::vector<ParsedGroup> parse_groups(const std::string& text) {
    const auto lines = split_lines(text);
    if (lines.empty() || trim(lines[0]) != kGroupsTag) throw MalformedPrompt("missing groups tag");
    std::vector<ParsedGroup> out;
    size_t i = 1;
    while (i < lines.size()) {
        const std::string& line = lines[i];
        if (starts_with(line, "- group:")) {
            ParsedGroup g;
            g.group_id = static_cast<GroupId>(parse_long(line.substr(8), "group id"));
            ++i;
            while (i < lines.size() && starts_with(lines[i], "  ")) {
                const std::string body = trim(lines[i]);
                if (starts_with(body, "description:")) {
                    g.description = trim(body.substr(12));
                } else if (starts_with(body, "members:")) {
                    std::istringstream ms(body.substr(8));
                    std::string tok;
                    while (std::getline(ms, tok, ',')) {
                        const std::string t = trim(tok);
                        if (!t.empty()) g.members.push_back(static_cast<AgentId>(parse_long(t, "member id")));
                    }
                }
                ++i;
            }
            if (g.description.empty()) throw MalformedPrompt("group without description");
            out.push_back(std::move(g));
        } else if (trim(line).empty()) {
            ++i;
        } else {
            throw MalformedPrompt("unexpected line in groups reply: " + line);
        }
    }
    return out;
}

std::map<GroupId, double> parse_likelihoods(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw MalformedPrompt(std::string("likelihood reply is not JSON: ") + e.what());
    }
    if (!j.is_object()) throw MalformedPrompt("likelihood reply must be a JSON object");
    std::map<GroupId, double> out;
    for (const auto& [key, val] : j.items()) {
        out[static_cast<GroupId>(parse_long(key, "group id"))] = val.get<double>();
    }
    return out;
}

std::vector<PoiId> parse_candidates(const std::string& value) {
    std::vector<PoiId> out;
    std::istringstream is(value);
    std::string tok;
    while (std::getline(is, tok, '|')) {
        const std::string t = trim(tok);
        if (!t.empty()) out.push_back(static_cast<PoiId>(parse_long(t, "candidate id")));
    }
    return out;
}

std::string join_candidates(const std::vector<PoiId>& candidates) {
    std::string out;
    for (size_t i = 0; i < candidates.size(); ++i) {
        if (i) out += " | ";
        out += std::to_string(candidates[i]);
    }
    return out;
}

std::optional<std::string> slot_value(const std::vector<NamedSlot>& slots, const std::string& name) {
    for (const auto& s : slots) {
        if (s.name == name) return s.value;
    }
    return std::nullopt;
}

namespace {

ParsedPrompt parse_raw_or_batch(const std::vector<std::string>& lines, bool batch) {
    ParsedPrompt out;
    out.kind = batch ? PromptKind::batch : PromptKind::raw;
    size_t i = 1;
    while (i < lines.size()) {
        if (batch) {
            while (i < lines.size() && !starts_with(lines[i], "=== agent ")) ++i;
            if (i >= lines.size()) break;
            ++i;  // separator line
        }
        if (i >= lines.size()) break;
        if (trim(lines[i]) != "## Function") throw MalformedPrompt("expected '## Function'");
        ++i;
        ParsedAgentSection sec;
        const std::string function = section_body(lines, i);
        sec.task = task_of(function);
        if (sec.task.empty()) throw MalformedPrompt("function section without task line");
        if (i >= lines.size() || trim(lines[i]) != "## Input") throw MalformedPrompt("expected '## Input'");
        ++i;
        const std::string input = section_body(lines, i);
        {
            const auto input_lines = split_lines(input + "\n");
            if (input_lines.empty() || !starts_with(input_lines[0], "agent:"))
                throw MalformedPrompt("input section without agent id");
            sec.agent = static_cast<AgentId>(parse_long(input_lines[0].substr(6), "agent id"));
        }
        if (i >= lines.size() || trim(lines[i]) != "## Variables")
            throw MalformedPrompt("expected '## Variables'");
        ++i;
        auto blocks = parse_slot_blocks(lines, i);
        if (blocks.size() != 1 || blocks[0].agent != sec.agent)
            throw MalformedPrompt("variables must hold exactly one block for the input agent");
        sec.slots = std::move(blocks[0].slots);
        out.agents.push_back(std::move(sec));
        if (!batch) break;
    }
    if (out.agents.empty()) throw MalformedPrompt("prompt lists no agents");
    return out;
}

ParsedPrompt parse_distill(const std::vector<std::string>& lines) {
    ParsedPrompt out;
    out.kind = PromptKind::distill;
    size_t i = 1;
    if (i >= lines.size() || trim(lines[i]) != "## Function (shared)")
        throw MalformedPrompt("expected '## Function (shared)'");
    ++i;
    const std::string function = section_body(lines, i);
    const std::string task = task_of(function);
    if (task.empty()) throw MalformedPrompt("shared function without task line");
    if (i >= lines.size() || trim(lines[i]) != "## Group") throw MalformedPrompt("expected '## Group'");
    ++i;
    while (i < lines.size() && !starts_with(lines[i], "## ")) {
        const std::string body = trim(lines[i]);
        if (starts_with(body, "group:")) out.group_id = static_cast<GroupId>(parse_long(body.substr(6), "group id"));
        if (starts_with(body, "description:")) out.group_description = trim(body.substr(12));
        ++i;
    }
    if (out.group_id < 0 || out.group_description.empty())
        throw MalformedPrompt("group section must carry id and description");
    if (i >= lines.size() || trim(lines[i]) != "## Slots") throw MalformedPrompt("expected '## Slots'");
    ++i;
    auto blocks = parse_slot_blocks(lines, i);
    if (blocks.empty()) throw MalformedPrompt("distill prompt without slots");
    for (auto& b : blocks) {
        b.task = task;
        out.agents.push_back(std::move(b));
    }
    return out;
}

ParsedPrompt parse_agent_listing(const std::vector<std::string>& lines, PromptKind kind) {
    ParsedPrompt out;
    out.kind = kind;
    for (size_t i = 1; i < lines.size(); ++i) {
        const std::string& line = lines[i];
        if (starts_with(line, "- agent:")) {
            out.listed_agents.push_back(static_cast<AgentId>(parse_long(line.substr(8), "agent id")));
        }
    }
    if (out.listed_agents.empty()) throw MalformedPrompt("listing prompt names no agents");
    return out;
}

ParsedPrompt parse_likelihood_request(const std::vector<std::string>& lines) {
    ParsedPrompt out;
    out.kind = PromptKind::likelihood;
    for (size_t i = 1; i < lines.size(); ++i) {
        const std::string& line = lines[i];
        if (starts_with(line, "agent:")) {
            out.listed_agents.push_back(static_cast<AgentId>(parse_long(line.substr(6), "agent id")));
        } else if (starts_with(line, "- group:")) {
            const GroupId gid = static_cast<GroupId>(parse_long(line.substr(8), "group id"));
            std::string summary;
            if (i + 1 < lines.size() && starts_with(lines[i + 1], "  summary:"))
                summary = trim(lines[i + 1].substr(10));
            out.listed_groups.emplace_back(gid, summary);
        }
    }
    if (out.listed_agents.size() != 1) throw MalformedPrompt("likelihood prompt needs one subject agent");
    if (out.listed_groups.empty()) throw MalformedPrompt("likelihood prompt lists no groups");
    return out;
}

ParsedPrompt parse_distill_gen(const std::vector<std::string>& lines) {
    ParsedPrompt out;
    out.kind = PromptKind::distill_gen;
    size_t i = 1;
    while (i < lines.size() && !starts_with(lines[i], "## ")) {
        const std::string body = trim(lines[i]);
        if (starts_with(body, "group:")) out.group_id = static_cast<GroupId>(parse_long(body.substr(6), "group id"));
        if (starts_with(body, "description:")) out.group_description = trim(body.substr(12));
        ++i;
    }
    if (i >= lines.size() || trim(lines[i]) != "## Function") throw MalformedPrompt("expected '## Function'");
    ++i;
    out.raw_template.function_section = section_body(lines, i);
    if (task_of(out.raw_template.function_section).empty())
        throw MalformedPrompt("distill-gen function without task line");
    if (i >= lines.size() || trim(lines[i]) != "## Variables") throw MalformedPrompt("expected '## Variables'");
    ++i;
    while (i < lines.size() && !starts_with(lines[i], "## ")) {
        const std::string body = trim(lines[i]);
        if (starts_with(body, "- ")) out.raw_template.variable_section.push_back({trim(body.substr(2)), ""});
        ++i;
    }
    if (i < lines.size() && trim(lines[i]) == "## Input") {
        ++i;
        out.raw_template.input_section = section_body(lines, i);
    }
    if (out.group_id < 0 || out.group_description.empty())
        throw MalformedPrompt("distill-gen prompt must carry group id and description");
    return out;
}

}  // namespace

ParsedPrompt parse_prompt(const std::string& text) {
    const auto lines = split_lines(text);
    if (lines.empty()) return {};
    const std::string tag = trim(lines[0]);
    if (tag == kRawTag) return parse_raw_or_batch(lines, false);
    if (tag == kBatchTag) return parse_raw_or_batch(lines, true);
    if (tag == kDistillTag) return parse_distill(lines);
    if (tag == kGroupingTag) return parse_agent_listing(lines, PromptKind::grouping);
    if (tag == kDescribeTag) return parse_agent_listing(lines, PromptKind::describe);
    if (tag == kLikelihoodTag) return parse_likelihood_request(lines);
    if (tag == kDistillGenTag) return parse_distill_gen(lines);
    return {};  // free text
}

}  // namespace opencity::prompts
