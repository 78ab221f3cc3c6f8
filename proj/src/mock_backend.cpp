#include "opencity/backend.hpp"

#include <algorithm>
#include <sstream>

#include "opencity/errors.hpp"
#include "opencity/prompts.hpp"
#include "opencity/rng.hpp"
#include "opencity/tokens.hpp"

namespace opencity {

namespace {

bool is_working_occupation(const std::string& occ) {
    return occ != "retiree" && occ != "student" && occ != "unemployed";
}

std::string fmt_hhmm(int minutes) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "%02d:%02d", minutes / 60, minutes % 60);
    return buf;
}

struct PlanWindow {
    int start_min;
    int end_min;
    std::string activity;
    std::string category;
};

std::vector<PlanWindow> plan_windows(const StaticProfile& p) {
    // start-of-day jitter: persona-keyed, quantized to 15 minutes
    const uint64_t h = ChoiceOracle::profile_hash(p);
    const int jitter = static_cast<int>(h % 5) * 15 - 30;  // -30..+30

    std::vector<PlanWindow> w;
    auto add = [&](int s, int e, const char* act, const char* cat) {
        w.push_back({s + jitter, e + jitter, act, cat});
    };
    if (p.occupation == "student") {
        add(8 * 60, 9 * 60, "breakfast", "food");
        add(9 * 60, 12 * 60, "classes", "education");
        add(12 * 60, 13 * 60, "lunch", "food");
        add(13 * 60, 16 * 60, "classes", "education");
        add(17 * 60, 19 * 60, "social", "leisure");
    } else if (!is_working_occupation(p.occupation)) {
        add(9 * 60, 10 * 60, "breakfast", "food");
        add(10 * 60, 12 * 60, "stroll", "leisure");
        add(12 * 60 + 30, 13 * 60 + 30, "lunch", "food");
        add(15 * 60, 17 * 60, (p.income_quintile >= 3 ? "errands" : "checkup"),
            (p.income_quintile >= 3 ? "shopping" : "health"));
    } else {
        add(7 * 60 + 30, 8 * 60 + 15, "breakfast", "food");
        add(8 * 60 + 30, 12 * 60, "work", "work");
        add(12 * 60, 13 * 60, "lunch", "food");
        add(13 * 60, 17 * 60, "work", "work");
        add(17 * 60 + 30, 19 * 60, (h % 3 == 0 ? "errands" : "unwind"),
            (h % 3 == 0 ? "shopping" : "leisure"));
        add(19 * 60, 20 * 60, "dinner", "food");
    }
    return w;
}

}  // namespace

MockBackend::MockBackend(std::vector<StaticProfile> profiles, uint64_t seed, LatencyModel lm)
    : seed_(seed), lm_(lm), oracle_(seed) {
    for (auto& p : profiles) profiles_.emplace(p.agent_id, std::move(p));
}

const StaticProfile& MockBackend::profile(AgentId id) const {
    auto it = profiles_.find(id);
    if (it == profiles_.end())
        throw MalformedPrompt("prompt references unknown agent " + std::to_string(id));
    return it->second;
}

std::string MockBackend::archetype_key(const StaticProfile& p) {
    return p.occupation + "/" + p.education + "/q" + std::to_string(p.income_quintile);
}

std::string MockBackend::plan_text(const StaticProfile& p) {
    std::string out;
    for (const auto& w : plan_windows(p)) {
        if (!out.empty()) out += " / ";
        out += fmt_hhmm(w.start_min) + "-" + fmt_hhmm(w.end_min) + " " + w.activity + " " + w.category;
    }
    return out;
}

SimulatedReply MockBackend::simulate(const LlmRequest& req) {
    if (fault_) {
        if (auto msg = fault_(req)) throw BackendError(req.request_id, *msg);
    }

    const auto parsed = prompts::parse_prompt(req.prompt);
    std::string text;

    switch (parsed.kind) {
        case prompts::PromptKind::raw:
        case prompts::PromptKind::batch:
        case prompts::PromptKind::distill: {
            std::vector<std::pair<AgentId, std::string>> answers;
            answers.reserve(parsed.agents.size());
            for (const auto& sec : parsed.agents) {
                const StaticProfile& p = profile(sec.agent);
                if (sec.task == "choose-location") {
                    auto cand_slot = prompts::slot_value(sec.slots, "candidates");
                    if (!cand_slot) throw MalformedPrompt("choose-location without candidates slot");
                    const auto candidates = prompts::parse_candidates(*cand_slot);
                    if (candidates.empty()) throw MalformedPrompt("empty candidate list");
                    auto mem = prompts::slot_value(sec.slots, "memory").value_or("");
                    if (mem == kNoContextMarker) mem.clear();
                    answers.emplace_back(sec.agent,
                                         std::to_string(oracle_.choose(p, candidates, mem)));
                } else if (sec.task == "plan-day") {
                    answers.emplace_back(sec.agent, plan_text(p));
                } else if (sec.task == "reflect") {
                    const uint64_t h = ChoiceOracle::profile_hash(p);
                    std::string r = "I keep returning to the places that fit my routine";
                    if (h % 2 == 0) r += " | Mornings near home suit me better than long trips";
                    answers.emplace_back(sec.agent, r);
                } else if (sec.task == "interrogate") {
                    const auto entries = prompts::slot_value(sec.slots, "entries").value_or("");
                    if (entries.empty() || entries == kNoContextMarker) {
                        answers.emplace_back(sec.agent, "I have no relevant memory of that.");
                    } else {
                        answers.emplace_back(sec.agent, "Based on my records: " + entries);
                    }
                } else {
                    throw MalformedPrompt("unknown task '" + sec.task + "'");
                }
            }
            text = prompts::render_answers(answers);
            break;
        }
        case prompts::PromptKind::grouping: {
            // cluster by archetype key, groups ordered by first appearance
            std::vector<prompts::ParsedGroup> groups;
            std::map<std::string, size_t> by_key;
            for (AgentId id : parsed.listed_agents) {
                const StaticProfile& p = profile(id);
                const std::string key = archetype_key(p);
                auto it = by_key.find(key);
                if (it == by_key.end()) {
                    prompts::ParsedGroup g;
                    g.group_id = static_cast<GroupId>(groups.size());
                    g.description = "Residents such as agent " + std::to_string(id) +
                                    ": mostly " + p.occupation + "s with " + p.education +
                                    " education around income quintile " +
                                    std::to_string(p.income_quintile) + " [" + key + "]";
                    by_key.emplace(key, groups.size());
                    groups.push_back(std::move(g));
                    it = by_key.find(key);
                }
                groups[it->second].members.push_back(id);
            }
            text = prompts::render_groups(groups);
            break;
        }
        case prompts::PromptKind::describe: {
            const StaticProfile& first = profile(parsed.listed_agents.front());
            text = "Residents such as agent " + std::to_string(first.agent_id) + ": mostly " +
                   first.occupation + "s with " + first.education +
                   " education around income quintile " + std::to_string(first.income_quintile) +
                   " [" + archetype_key(first) + "]";
            break;
        }
        case prompts::PromptKind::likelihood: {
            // similarity = matching fraction over the archetype key attributes,
            // read from the bracketed key in each group summary
            const StaticProfile& p = profile(parsed.listed_agents.front());
            std::string out = "{";
            bool first_entry = true;
            for (const auto& [gid, summary] : parsed.listed_groups) {
                double score = 0.0;
                const size_t lb = summary.rfind('['), rb = summary.rfind(']');
                if (lb != std::string::npos && rb != std::string::npos && rb > lb) {
                    const std::string key = summary.substr(lb + 1, rb - lb - 1);
                    std::istringstream ks(key);
                    std::string occ, edu, q;
                    std::getline(ks, occ, '/');
                    std::getline(ks, edu, '/');
                    std::getline(ks, q, '/');
                    int matches = 0;
                    matches += (occ == p.occupation);
                    matches += (edu == p.education);
                    matches += (q == "q" + std::to_string(p.income_quintile));
                    score = matches / 3.0;
                }
                if (!first_entry) out += ", ";
                out += "\"" + std::to_string(gid) + "\": " + std::to_string(score);
                first_entry = false;
            }
            out += "}";
            text = out;
            break;
        }
        case prompts::PromptKind::distill_gen: {
            std::ostringstream os;
            os << "[OC-DISTILL-TEMPLATE v1]\n## Function (shared)\n"
               << parsed.raw_template.function_section << "\n## Group\ngroup: " << parsed.group_id
               << "\ndescription: " << parsed.group_description << "\n## Slots\n{slots}\n";
            text = os.str();
            break;
        }
        case prompts::PromptKind::free_text: {
            std::istringstream is(req.prompt);
            std::string word, head;
            int n = 0;
            while (n < 8 && (is >> word)) {
                if (n) head += " ";
                head += word;
                ++n;
            }
            text = "ack: " + head;
            break;
        }
    }

    SimulatedReply reply;
    reply.text = std::move(text);
    reply.input_tokens = count_tokens(req.prompt);
    reply.output_tokens = count_tokens(reply.text);
    reply.wait = lm_.wait_for(reply.input_tokens, reply.output_tokens);
    return reply;
}

}  // namespace opencity
