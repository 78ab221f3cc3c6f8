#include "opencity/optimizer.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include <json.hpp>

#include "opencity/errors.hpp"
#include "opencity/tokens.hpp"

namespace opencity {

void IplConfig::validate() const {
    if (bootstrap_count < 1) throw Error("IPL M must be >= 1");
    if (!(threshold > 0.0 && threshold < 1.0)) throw Error("IPL T must be in (0,1)");
}

Ipl::Ipl(IplConfig cfg, Gateway& gw, RequestFactory& factory)
    : cfg_(cfg), gw_(gw), factory_(factory) {
    cfg_.validate();
}

std::string Ipl::summary_of(const std::string& description) {
    // keep the bracketed archetype tag when present, else the first words
    const size_t lb = description.rfind('[');
    const size_t rb = description.rfind(']');
    if (lb != std::string::npos && rb != std::string::npos && rb > lb)
        return "archetype " + description.substr(lb, rb - lb + 1);
    std::istringstream is(description);
    std::string word, out;
    for (int i = 0; i < 10 && (is >> word); ++i) {
        if (i) out += " ";
        out += word;
    }
    return out;
}

void Ipl::record(AgentId agent, GroupId g) {
    membership_[agent] = g;
    groups_[static_cast<size_t>(g)].member_ids.push_back(agent);
}

void Ipl::bootstrap(const std::vector<StaticProfile>& profiles) {
    if (profiles.empty()) throw Error("ipl bootstrap needs at least one profile");
    const size_t m = std::min(profiles.size(), static_cast<size_t>(cfg_.bootstrap_count));
    const std::vector<StaticProfile> head(profiles.begin(), profiles.begin() + static_cast<long>(m));

    std::set<AgentId> expected;
    for (const auto& p : head) expected.insert(p.agent_id);

    for (int attempt = 0; attempt < 2; ++attempt) {
        auto req = factory_.make(prompts::render_grouping_request(head), {head.front().agent_id});
        auto handle = gw_.submit(std::move(req));
        const LlmResponse resp = gw_.await_response(handle);
        try {
            const auto parsed = prompts::parse_groups(resp.text);
            if (parsed.empty() || parsed.size() > m) throw MalformedPrompt("group count out of range");
            std::set<AgentId> seen;
            for (const auto& g : parsed) {
                if (g.description.empty()) throw MalformedPrompt("empty description");
                for (AgentId a : g.members) {
                    if (!expected.count(a)) throw MalformedPrompt("member outside bootstrap set");
                    if (!seen.insert(a).second) throw MalformedPrompt("member in two groups");
                }
            }
            if (seen != expected) throw MalformedPrompt("bootstrap agents not fully partitioned");

            for (const auto& g : parsed) {
                Group group;
                group.group_id = static_cast<GroupId>(groups_.size());
                group.description = g.description;
                group.prototype_summary = summary_of(g.description);
                groups_.push_back(std::move(group));
                ++stats_.groups_created;
                for (AgentId a : g.members) record(a, groups_.back().group_id);
            }
            return;
        } catch (const MalformedPrompt& e) {
            if (attempt == 1)
                throw UnparseableGrouping(std::string("grouping reply failed schema twice: ") +
                                          e.what());
        }
    }
}

GroupId Ipl::create_group(const StaticProfile& founder) {
    auto req = factory_.make(prompts::render_describe_request({founder}), {founder.agent_id});
    auto handle = gw_.submit(std::move(req));
    const LlmResponse resp = gw_.await_response(handle);
    std::string description = resp.text;
    if (description.empty()) description = "group founded by agent " + std::to_string(founder.agent_id);

    Group group;
    group.group_id = static_cast<GroupId>(groups_.size());
    group.description = description;
    group.prototype_summary = summary_of(description);
    groups_.push_back(std::move(group));
    ++stats_.groups_created;
    return groups_.back().group_id;
}

GroupId Ipl::assign(const StaticProfile& p) {
    if (auto it = membership_.find(p.agent_id); it != membership_.end()) return it->second;

    if (groups_.empty()) {
        const GroupId g = create_group(p);
        record(p.agent_id, g);
        log_.push_back({p.agent_id, g, 1.0, true});
        return g;
    }

    std::vector<std::pair<GroupId, std::string>> listing;
    listing.reserve(groups_.size());
    for (const auto& g : groups_) listing.emplace_back(g.group_id, g.prototype_summary);

    std::map<GroupId, double> scores;
    for (int attempt = 0; attempt < 2; ++attempt) {
        auto req = factory_.make(prompts::render_likelihood_request(p, listing), {p.agent_id});
        auto handle = gw_.submit(std::move(req));
        const LlmResponse resp = gw_.await_response(handle);
        scores = prompts::parse_likelihoods(resp.text);

        bool in_range = true;
        for (const auto& [g, s] : scores) {
            if (s < 0.0 || s > 1.0) in_range = false;
        }
        if (in_range) break;
        if (attempt == 1) {
            // clamp with warning after the retry
            ++stats_.likelihood_clamped;
            for (auto& [g, s] : scores) s = std::clamp(s, 0.0, 1.0);
        }
    }

    GroupId best = -1;
    double best_score = -1.0;
    for (const auto& g : groups_) {  // iteration in id order makes ties pick the lowest id
        auto it = scores.find(g.group_id);
        if (it == scores.end()) continue;
        if (it->second > best_score) {
            best_score = it->second;
            best = g.group_id;
        }
    }

    if (best >= 0 && best_score >= cfg_.threshold) {
        record(p.agent_id, best);
        log_.push_back({p.agent_id, best, best_score, false});
        return best;
    }
    const GroupId g = create_group(p);
    record(p.agent_id, g);
    log_.push_back({p.agent_id, g, best_score, true});
    return g;
}

void Ipl::ensure_assigned(const std::vector<StaticProfile>& profiles) {
    if (groups_.empty() && !profiles.empty()) bootstrap(profiles);
    for (const auto& p : profiles) {
        if (!assigned(p.agent_id)) assign(p);
    }
}

GroupId Ipl::group_of(AgentId agent) const {
    auto it = membership_.find(agent);
    if (it == membership_.end())
        throw AgentNotInGroup("agent " + std::to_string(agent) + " has no group");
    return it->second;
}

std::string Ipl::groups_json() const {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& g : groups_) {
        j.push_back({{"group_id", g.group_id},
                     {"description", g.description},
                     {"member_ids", g.member_ids}});
    }
    return j.dump(2) + "\n";
}

DistillMetaPrompt distill_meta_prompt(const RawPrompt& raw, const Group& group, Gateway& gw,
                                      RequestFactory& factory) {
    if (raw.function_section.empty() || raw.variable_section.empty() || raw.input_section.empty())
        throw DistillInvalid("raw prompt must carry all three sections");

    AgentId rep = group.member_ids.empty() ? 0 : group.member_ids.front();
    auto req = factory.make(prompts::render_distill_gen_request(raw, group.group_id, group.description),
                            {rep});
    auto handle = gw.submit(std::move(req));
    const LlmResponse resp = gw.await_response(handle);

    // expected reply: the distill template with a {slots} placeholder
    const std::string& text = resp.text;
    if (text.find("{slots}") == std::string::npos)
        throw DistillInvalid("distill template misses the {slots} placeholder");
    const size_t fn_begin = text.find("## Function (shared)\n");
    const size_t grp_begin = text.find("\n## Group\n");
    if (fn_begin == std::string::npos || grp_begin == std::string::npos || grp_begin < fn_begin)
        throw DistillInvalid("distill template misses required sections");

    DistillMetaPrompt meta;
    meta.shared_function =
        text.substr(fn_begin + 21, grp_begin - (fn_begin + 21));
    meta.group_id = group.group_id;
    meta.shared_context = group.description;
    if (meta.shared_function.find("task:") == std::string::npos)
        throw DistillInvalid("distill template lost the task line");
    return meta;
}

LlmRequest assemble_batch(const Group& group,
                          const std::vector<std::pair<AgentId, std::vector<NamedSlot>>>& dynamics,
                          const DistillMetaPrompt& meta, RequestFactory& factory) {
    if (dynamics.empty()) throw Error("assemble_batch: no agents");
    std::set<AgentId> members(group.member_ids.begin(), group.member_ids.end());
    DistillMetaPrompt filled = meta;
    filled.per_agent_slots.clear();
    std::vector<AgentId> order;
    for (const auto& [agent, slots] : dynamics) {
        if (!members.count(agent))
            throw AgentNotInGroup("agent " + std::to_string(agent) + " not in group " +
                                  std::to_string(group.group_id));
        filled.per_agent_slots.emplace_back(agent, slots);
        order.push_back(agent);
    }
    return factory.make(prompts::render_distill(filled), order);
}

std::map<AgentId, std::string> split_response(const LlmResponse& resp,
                                              const std::vector<AgentId>& group_order) {
    std::vector<std::pair<AgentId, std::string>> answers;
    try {
        answers = prompts::parse_answers(resp.text);
    } catch (const MalformedPrompt& e) {
        throw ArityMismatch(std::string("answers reply unparseable: ") + e.what());
    }
    if (answers.size() != group_order.size())
        throw ArityMismatch("got " + std::to_string(answers.size()) + " answers for " +
                            std::to_string(group_order.size()) + " agents");
    std::map<AgentId, std::string> out;
    for (size_t i = 0; i < answers.size(); ++i) {
        if (answers[i].first != group_order[i])
            throw ArityMismatch("answer " + std::to_string(i) + " is for agent " +
                                std::to_string(answers[i].first) + ", expected " +
                                std::to_string(group_order[i]));
        out[answers[i].first] = answers[i].second;
    }
    return out;
}

ReductionRates reduction_rates(const GatewayStats& baseline, const GatewayStats& optimized) {
    const int64_t base_tokens = baseline.tokens_in_total + baseline.tokens_out_total;
    const int64_t opt_tokens = optimized.tokens_in_total + optimized.tokens_out_total;
    if (baseline.requests_total == 0 || base_tokens == 0)
        throw ZeroBaseline("baseline run has no requests or tokens");
    ReductionRates r;
    r.rr = 1.0 - static_cast<double>(optimized.requests_total) /
                     static_cast<double>(baseline.requests_total);
    r.tr = 1.0 - static_cast<double>(opt_tokens) / static_cast<double>(base_tokens);
    return r;
}

PromptingMode prompting_mode_from_string(const std::string& s) {
    if (s == "raw") return PromptingMode::raw;
    if (s == "batch") return PromptingMode::batch;
    if (s == "archetype") return PromptingMode::archetype;
    if (s == "group_distill") return PromptingMode::group_distill;
    throw Error("unknown prompting mode: " + s);
}

std::string to_string(PromptingMode m) {
    switch (m) {
        case PromptingMode::raw: return "raw";
        case PromptingMode::batch: return "batch";
        case PromptingMode::archetype: return "archetype";
        case PromptingMode::group_distill: return "group_distill";
    }
    return "raw";
}

PromptStrategy::PromptStrategy(PromptingMode mode, Gateway& gw, RequestFactory& factory, Ipl* ipl)
    : mode_(mode), gw_(gw), factory_(factory), ipl_(ipl) {
    if ((mode_ == PromptingMode::archetype || mode_ == PromptingMode::group_distill) && !ipl_)
        throw Error("grouped prompting modes need IPL");
}

std::map<AgentId, std::string> PromptStrategy::decide(const std::vector<DecisionIntent>& intents) {
    if (intents.empty()) return {};
    switch (mode_) {
        case PromptingMode::raw: return decide_raw(intents);
        case PromptingMode::batch: return decide_batch(intents);
        case PromptingMode::archetype: return decide_grouped(intents, true);
        case PromptingMode::group_distill: return decide_grouped(intents, false);
    }
    return {};
}

std::map<AgentId, std::string> PromptStrategy::decide_raw(const std::vector<DecisionIntent>& intents) {
    std::vector<ResponseHandle> handles;
    handles.reserve(intents.size());
    for (const auto& in : intents) {
        handles.push_back(gw_.submit(factory_.make(prompts::render_raw(in.raw, in.agent), {in.agent})));
    }
    std::map<AgentId, std::string> out;
    for (size_t i = 0; i < intents.size(); ++i) {
        const LlmResponse resp = gw_.await_response(handles[i]);
        const auto answers = prompts::parse_answers(resp.text);
        if (answers.size() != 1 || answers[0].first != intents[i].agent)
            throw ArityMismatch("raw reply must answer exactly the asked agent");
        out[intents[i].agent] = answers[0].second;
    }
    return out;
}

std::map<AgentId, std::string> PromptStrategy::decide_batch(const std::vector<DecisionIntent>& intents) {
    std::map<AgentId, std::string> out;
    std::vector<std::pair<std::vector<AgentId>, ResponseHandle>> pending;
    for (size_t begin = 0; begin < intents.size(); begin += kMaxBatchAgents) {
        const size_t end = std::min(intents.size(), begin + kMaxBatchAgents);
        std::vector<std::pair<AgentId, RawPrompt>> chunk;
        std::vector<AgentId> order;
        for (size_t i = begin; i < end; ++i) {
            chunk.emplace_back(intents[i].agent, intents[i].raw);
            order.push_back(intents[i].agent);
        }
        pending.emplace_back(order, gw_.submit(factory_.make(prompts::render_batch(chunk), order)));
    }
    size_t begin = 0;
    for (auto& [order, handle] : pending) {
        const LlmResponse resp = gw_.await_response(handle);
        try {
            auto split = split_response(resp, order);
            out.merge(split);
        } catch (const ArityMismatch&) {
            // whole chunk falls back to per-agent raw prompts
            ++stats_.fallback_batches;
            std::vector<DecisionIntent> chunk(intents.begin() + static_cast<long>(begin),
                                              intents.begin() + static_cast<long>(begin + order.size()));
            auto raw = decide_raw(chunk);
            out.merge(raw);
        }
        begin += order.size();
    }
    return out;
}

const DistillMetaPrompt& PromptStrategy::template_for(const Group& g, const RawPrompt& raw) {
    std::string task;
    {
        std::istringstream is(raw.function_section);
        std::getline(is, task);
    }
    const auto key = std::make_pair(g.group_id, task);
    auto it = templates_.find(key);
    if (it == templates_.end()) {
        it = templates_.emplace(key, distill_meta_prompt(raw, g, gw_, factory_)).first;
    }
    return it->second;
}

std::map<AgentId, std::string> PromptStrategy::decide_grouped(
    const std::vector<DecisionIntent>& intents, bool archetype) {
    // partition intents by group, preserving intent order inside each group
    std::map<GroupId, std::vector<const DecisionIntent*>> by_group;
    for (const auto& in : intents) by_group[ipl_->group_of(in.agent)].push_back(&in);

    std::map<AgentId, std::string> out;
    struct PendingBatch {
        std::vector<AgentId> order;
        ResponseHandle handle;
        std::vector<const DecisionIntent*> chunk;
    };
    std::vector<PendingBatch> pending;
    std::vector<std::pair<std::vector<const DecisionIntent*>, ResponseHandle>> pending_arch;

    for (auto& [gid, list] : by_group) {
        const Group& group = ipl_->groups()[static_cast<size_t>(gid)];
        for (size_t begin = 0; begin < list.size(); begin += kMaxBatchAgents) {
            const size_t end = std::min(list.size(), begin + kMaxBatchAgents);
            std::vector<const DecisionIntent*> chunk(list.begin() + static_cast<long>(begin),
                                                     list.begin() + static_cast<long>(end));
            if (archetype) {
                // one representative answers; the reply is reused verbatim
                const DecisionIntent* rep = chunk.front();
                for (const auto* in : chunk) {
                    if (in->agent < rep->agent) rep = in;
                }
                pending_arch.emplace_back(chunk, gw_.submit(factory_.make(
                                                     prompts::render_raw(rep->raw, rep->agent),
                                                     {rep->agent})));
            } else {
                const DistillMetaPrompt& meta = template_for(group, chunk.front()->raw);
                std::vector<std::pair<AgentId, std::vector<NamedSlot>>> dynamics;
                std::vector<AgentId> order;
                for (const auto* in : chunk) {
                    dynamics.emplace_back(in->agent, in->raw.variable_section);
                    order.push_back(in->agent);
                }
                PendingBatch pb;
                pb.order = order;
                pb.handle = gw_.submit(assemble_batch(group, dynamics, meta, factory_));
                pb.chunk = chunk;
                pending.push_back(std::move(pb));
            }
        }
    }

    for (auto& [chunk, handle] : pending_arch) {
        const LlmResponse resp = gw_.await_response(handle);
        const auto answers = prompts::parse_answers(resp.text);
        if (answers.size() != 1) throw ArityMismatch("archetype reply must hold one answer");
        for (const auto* in : chunk) out[in->agent] = answers[0].second;
    }
    for (auto& pb : pending) {
        const LlmResponse resp = gw_.await_response(pb.handle);
        try {
            auto split = split_response(resp, pb.order);
            out.merge(split);
        } catch (const ArityMismatch&) {
            ++stats_.fallback_batches;
            std::vector<DecisionIntent> chunk;
            for (const auto* in : pb.chunk) chunk.push_back(*in);
            auto raw = decide_raw(chunk);
            out.merge(raw);
        }
    }
    return out;
}

}  // namespace opencity
