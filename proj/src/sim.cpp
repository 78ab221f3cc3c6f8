#include "opencity/sim.hpp"

#include <algorithm>
#include <sstream>

#include "opencity/errors.hpp"

namespace opencity {

AgentKind agent_kind_from_string(const std::string& s) {
    if (s == "generative") return AgentKind::generative;
    if (s == "epr") return AgentKind::epr;
    throw Error("unknown agent kind: " + s);
}

std::string to_string(AgentKind k) {
    return k == AgentKind::generative ? "generative" : "epr";
}

namespace {
std::string hhmm_of(SimTime t) {
    const int64_t mins = t.count() / 60'000'000 % (24 * 60);
    char buf[8];
    std::snprintf(buf, sizeof(buf), "%02d:%02d", static_cast<int>(mins / 60),
                  static_cast<int>(mins % 60));
    return buf;
}
}  // namespace

PoiId Simulation::home_poi(const City& city, const StaticProfile& p, uint64_t seed) {
    std::vector<PoiId> in_block;
    for (const auto& poi : city.pois()) {
        if (poi.block_id == p.home_block) in_block.push_back(poi.poi_id);
    }
    if (in_block.empty()) throw UnknownBlock("home block has no POIs");
    const uint64_t h = hash_mix(hash_mix(seed, 0x40E5ull), static_cast<uint64_t>(p.agent_id));
    return in_block[h % in_block.size()];
}

Simulation::Simulation(SimConfig cfg, const City& city, std::vector<StaticProfile> profiles,
                       Gateway& gw, RequestFactory& factory, PromptStrategy* strategy)
    : cfg_(cfg), city_(city), gw_(gw), factory_(factory), strategy_(strategy) {
    if (cfg_.agent_kind == AgentKind::generative && !strategy_)
        throw Error("generative agents need a prompting strategy");
    cfg_.epr.validate();
    if (cfg_.agent_kind == AgentKind::epr)
        wait_sampler_ = std::make_unique<EprWaitSampler>(cfg_.epr);

    std::sort(profiles.begin(), profiles.end(),
              [](const auto& a, const auto& b) { return a.agent_id < b.agent_id; });
    agents_.reserve(profiles.size());
    for (auto& p : profiles) {
        AgentState a;
        a.profile = std::move(p);
        a.memory.reflect_threshold = cfg_.reflect_threshold;
        agents_.push_back(std::move(a));
    }
    homes_.reserve(agents_.size());
    trajectories_.reserve(agents_.size());
    for (auto& a : agents_) {
        const PoiId home = home_poi(city_, a.profile, cfg_.seed);
        homes_.push_back(home);
        a.location = home;
        a.visit_counts[home] = 1;
        a.distinct_visited = 1;
        agent_rngs_.emplace_back(hash_mix(cfg_.seed, static_cast<uint64_t>(a.profile.agent_id)));
        Trajectory tr;
        tr.agent_id = a.profile.agent_id;
        trajectories_.push_back(std::move(tr));
    }
    for (size_t i = 0; i < agents_.size(); ++i) {
        index_[agents_[i].profile.agent_id] = i;
        record_point(i, homes_[i]);
    }
}

size_t Simulation::index_of(AgentId id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) throw UnknownAgent("agent " + std::to_string(id));
    return it->second;
}

void Simulation::schedule_next(size_t idx, SimTime t) {
    auto& a = agents_[idx];
    a.next_intention += 1;
    if (a.next_intention < a.plan->intentions.size()) {
        const int ticks_per_day = 24 * 60 / cfg_.tick_minutes;
        const SimTime day_start =
            SimTime{int64_t(tick_ / ticks_per_day) * ticks_per_day * cfg_.tick_minutes * 60'000'000};
        const int start = a.plan->intentions[a.next_intention].start_min;
        const int tick_of_day = (start + cfg_.tick_minutes - 1) / cfg_.tick_minutes;
        a.next_wake = std::max(day_start + minutes(int64_t(tick_of_day) * cfg_.tick_minutes),
                               t + minutes(cfg_.tick_minutes));
    } else {
        a.next_wake = t + minutes(cfg_.tick_minutes);  // go home next tick
    }
}

int Simulation::ticks_total() const { return cfg_.days * 24 * 60 / cfg_.tick_minutes; }

void Simulation::record_point(size_t idx, PoiId poi) {
    const auto& p = city_.poi(poi);
    trajectories_[idx].points.push_back(TrajectoryPoint{now(), poi, p.block_id, p.pos});
}

void Simulation::append_observation(size_t idx, const std::string& text, PoiId poi) {
    MemoryEntry e;
    e.time = now();
    e.kind = MemoryKind::observation;
    e.text = text;
    e.importance = importance_for(text);
    e.location = poi;
    agents_[idx].memory.append(std::move(e));
}

void Simulation::plan_phase(const std::string& date) {
    std::vector<DecisionIntent> intents;
    intents.reserve(agents_.size());
    for (auto& a : agents_) {
        intents.push_back({a.profile.agent_id, prompts::plan_day(a.profile, date)});
    }

    std::map<AgentId, std::string> answers;
    try {
        answers = strategy_->decide(intents);
    } catch (const Error& e) {
        events_.push_back("plan phase backend failure: " + std::string(e.what()));
    }

    // one retry for unparseable plans, then the occupation template
    std::vector<DecisionIntent> retry;
    for (size_t i = 0; i < agents_.size(); ++i) {
        auto& a = agents_[i];
        const auto it = answers.find(a.profile.agent_id);
        std::optional<DailyPlan> plan;
        if (it != answers.end()) plan = parse_plan(it->second, date);
        if (!plan) retry.push_back(intents[i]);
        a.plan = std::move(plan);
    }
    if (!retry.empty()) {
        std::map<AgentId, std::string> second;
        try {
            second = strategy_->decide(retry);
        } catch (const Error& e) {
            events_.push_back("plan retry backend failure: " + std::string(e.what()));
        }
        for (const auto& in : retry) {
            auto& a = agents_[index_of(in.agent)];
            const auto it = second.find(in.agent);
            std::optional<DailyPlan> plan;
            if (it != second.end()) plan = parse_plan(it->second, date);
            if (!plan) {
                plan = template_plan(a.profile, date);
                events_.push_back("agent " + std::to_string(in.agent) +
                                  ": fallback template plan used");
            }
            a.plan = std::move(plan);
        }
    }

    const SimTime day_start = now();
    for (auto& a : agents_) {
        a.next_intention = 0;
        // plan text recorded as a plan-kind memory entry
        std::string text = "plan for " + date + ":";
        for (const auto& in : a.plan->intentions) text += " " + in.activity;
        MemoryEntry e;
        e.time = day_start;
        e.kind = MemoryKind::plan;
        e.text = text;
        e.importance = importance_for("plan");
        e.location = a.location;
        a.memory.append(std::move(e));

        const int first_start = a.plan->intentions.front().start_min;
        const int tick_of_day = (first_start + cfg_.tick_minutes - 1) / cfg_.tick_minutes;
        a.next_wake = day_start + minutes(int64_t(tick_of_day) * cfg_.tick_minutes);
    }
}

void Simulation::move_home_if_done(size_t idx) {
    auto& a = agents_[idx];
    if (a.location != homes_[idx]) {
        a.location = homes_[idx];
        record_point(idx, a.location);
        append_observation(idx, "At " + hhmm_of(now()) + " returned home for rest", a.location);
    }
    // sleep until the next day's planning
    const int ticks_per_day = 24 * 60 / cfg_.tick_minutes;
    const int next_day_tick = (tick_ / ticks_per_day + 1) * ticks_per_day;
    a.next_wake = SimTime{int64_t(next_day_tick) * cfg_.tick_minutes * 60'000'000};
}

void Simulation::reflect_phase() {
    std::vector<DecisionIntent> intents;
    std::vector<size_t> who;
    for (size_t i = 0; i < agents_.size(); ++i) {
        auto& a = agents_[i];
        if (!a.memory.should_reflect()) continue;
        std::vector<std::string> recent;
        const size_t n = a.memory.entries.size();
        for (size_t k = n >= 4 ? n - 4 : 0; k < n; ++k) recent.push_back(a.memory.entries[k].text);
        intents.push_back({a.profile.agent_id, prompts::reflect(a.profile, recent)});
        who.push_back(i);
    }
    if (intents.empty()) return;

    std::map<AgentId, std::string> answers;
    try {
        answers = strategy_->decide(intents);
    } catch (const Error& e) {
        // reflection skipped, accumulator retained
        events_.push_back("reflect phase backend failure: " + std::string(e.what()));
        return;
    }
    for (size_t k = 0; k < who.size(); ++k) {
        auto& a = agents_[who[k]];
        const auto it = answers.find(a.profile.agent_id);
        if (it == answers.end()) continue;
        // up to three insights separated by ' | '
        std::istringstream is(it->second);
        std::string part;
        int added = 0;
        std::string cur;
        auto flush = [&]() {
            if (cur.empty() || added >= 3) return;
            MemoryEntry e;
            e.time = now();
            e.kind = MemoryKind::reflection;
            e.text = "insight: " + cur;
            e.importance = importance_for("insight");
            e.location = a.location;
            a.memory.append(std::move(e));
            ++added;
        };
        size_t pos = 0;
        const std::string& text = it->second;
        while (true) {
            const size_t bar = text.find(" | ", pos);
            cur = text.substr(pos, bar == std::string::npos ? std::string::npos : bar - pos);
            flush();
            if (bar == std::string::npos) break;
            pos = bar + 3;
        }
        if (added > 0) a.memory.note_reflected();
    }
}

void Simulation::generative_tick() {
    const int ticks_per_day = 24 * 60 / cfg_.tick_minutes;
    if (tick_ % ticks_per_day == 0) {
        plan_phase(sim_time_to_iso(now()).substr(0, 10));
    }
    const SimTime t = now();

    // wake set for this tick
    std::vector<size_t> awake;
    for (size_t i = 0; i < agents_.size(); ++i) {
        auto& a = agents_[i];
        if (t < a.next_wake) continue;
        if (a.next_intention >= a.plan->intentions.size()) {
            move_home_if_done(i);
            continue;
        }
        awake.push_back(i);
    }
    if (awake.empty()) {
        reflect_phase();
        return;
    }

    // perception runs as offloaded spatial queries
    std::vector<TaskHandle> handles;
    handles.reserve(awake.size());
    for (size_t i : awake) {
        auto& a = agents_[i];
        const Intention intent = a.plan->intentions[a.next_intention];
        const Point pos = city_.poi(a.location).pos;
        const double radius = cfg_.perception_radius_km;
        const int cap = cfg_.candidate_cap;
        const City* city = &city_;
        const PoiId self = a.location;
        LocalTask task;
        task.task_id = next_task_id_++;
        task.agent_id = a.profile.agent_id;
        task.kind = LocalTaskKind::spatial_query;
        task.virtual_cost = cfg_.spatial_query_cost;
        task.work = [city, pos, radius, cap, intent, self]() {
            auto collect = [&](const std::string& category) {
                std::vector<PoiId> ids;
                for (const auto* p : city->nearby_pois(pos, radius, category)) {
                    if (p->poi_id == self) continue;  // the venue the agent stands at
                    ids.push_back(p->poi_id);
                    if (static_cast<int>(ids.size()) >= cap) break;
                }
                return ids;
            };
            auto ids = collect(intent.category);
            if (ids.empty()) ids = collect("");
            return prompts::join_candidates(ids);
        };
        handles.push_back(gw_.offload_local_task(std::move(task)));
    }

    std::vector<Acting> acting;
    std::vector<DecisionIntent> intents;
    for (size_t k = 0; k < awake.size(); ++k) {
        const size_t i = awake[k];
        auto& a = agents_[i];
        const Intention intent = a.plan->intentions[a.next_intention];
        const auto candidates = prompts::parse_candidates(gw_.await_task(handles[k]));
        if (candidates.empty()) {
            append_observation(i, "no reachable venue for " + intent.activity + " near block " +
                                      std::to_string(city_.poi(a.location).block_id),
                               a.location);
            schedule_next(i, t);
            continue;
        }
        std::string memory_excerpt;
        const size_t n = a.memory.entries.size();
        for (size_t e = n >= 2 ? n - 2 : 0; e < n; ++e) {
            if (!memory_excerpt.empty()) memory_excerpt += "; ";
            memory_excerpt += a.memory.entries[e].text;
        }
        const std::string context = "at block " + std::to_string(city_.poi(a.location).block_id) +
                                    " around " + hhmm_of(t) + " heading to " + intent.activity;
        intents.push_back({a.profile.agent_id,
                           prompts::location_choice(a.profile, memory_excerpt, context, candidates)});
        acting.push_back({i, intent, candidates});
    }

    std::map<AgentId, std::string> answers;
    if (!intents.empty()) {
        try {
            answers = strategy_->decide(intents);
        } catch (const Error& e) {
            // step marked failed: agents stay and retry next tick
            events_.push_back("decision backend failure at tick " + std::to_string(tick_) + ": " +
                              e.what());
            reflect_phase();
            return;
        }
    }

    // apply moves and queue memory updates in agent id order
    std::vector<std::pair<size_t, TaskHandle>> mem_tasks;
    for (const auto& act : acting) {
        auto& a = agents_[act.idx];
        const auto it = answers.find(a.profile.agent_id);
        PoiId chosen = -1;
        if (it != answers.end()) {
            try {
                chosen = static_cast<PoiId>(std::stol(it->second));
            } catch (const std::exception&) {
                chosen = -1;
            }
        }
        if (chosen < 0 ||
            std::find(act.candidates.begin(), act.candidates.end(), chosen) == act.candidates.end()) {
            // reused or malformed answer naming a venue this agent cannot see
            events_.push_back("agent " + std::to_string(a.profile.agent_id) +
                              ": invalid venue answer, staying");
            schedule_next(act.idx, t);
            continue;
        }

        auto [vit, inserted] = a.visit_counts.try_emplace(chosen, 0);
        if (inserted) ++a.distinct_visited;
        ++vit->second;
        a.location = chosen;
        record_point(act.idx, chosen);

        const std::string text = "At " + hhmm_of(t) + " visited " + city_.poi(chosen).name + " (" +
                                 city_.poi(chosen).category + ") in block " +
                                 std::to_string(city_.poi(chosen).block_id) + " for " +
                                 act.intention.activity;
        LocalTask task;
        task.task_id = next_task_id_++;
        task.agent_id = a.profile.agent_id;
        task.kind = LocalTaskKind::memory_update;
        task.virtual_cost = cfg_.memory_update_cost;
        task.work = [text]() { return std::to_string(importance_for(text)) + "|" + text; };
        mem_tasks.emplace_back(act.idx, gw_.offload_local_task(std::move(task)));

        schedule_next(act.idx, t);
    }
    for (auto& [idx, handle] : mem_tasks) {
        const std::string result = gw_.await_task(handle);
        const size_t bar = result.find('|');
        MemoryEntry e;
        e.time = t;
        e.kind = MemoryKind::observation;
        e.importance = std::stoi(result.substr(0, bar));
        e.text = result.substr(bar + 1);
        e.location = agents_[idx].location;
        agents_[idx].memory.append(std::move(e));
        (void)gw_.drain_mailbox(agents_[idx].profile.agent_id);
    }

    reflect_phase();
}

void Simulation::epr_tick() {
    const SimTime t = now();
    for (size_t i = 0; i < agents_.size(); ++i) {
        auto& a = agents_[i];
        if (t < a.next_wake) continue;
        if (tick_ > 0) {
            const PoiId chosen = epr_step(a, city_, agent_rngs_[i], cfg_.epr);
            record_point(i, chosen);
        }
        const double wait_h = wait_sampler_->sample_hours(agent_rngs_[i]);
        const int ticks = std::max<int>(1, static_cast<int>(wait_h * 60.0 / cfg_.tick_minutes + 0.5));
        a.next_wake = t + minutes(int64_t(ticks) * cfg_.tick_minutes);
    }
}

void Simulation::advance_tick() {
    if (cfg_.agent_kind == AgentKind::generative) {
        generative_tick();
    } else {
        epr_tick();
    }
    ++tick_;
}

SimOutputs Simulation::run() {
    const int total = ticks_total();
    while (tick_ < total) advance_tick();

    SimOutputs out;
    out.trajectories = trajectories_;
    out.memories.reserve(agents_.size());
    for (const auto& a : agents_) out.memories.push_back(a.memory.entries);
    out.gateway_stats = gw_.gateway_stats();
    if (strategy_) out.optimizer_stats = strategy_->stats();
    out.event_log = events_;
    return out;
}

}  // namespace opencity
