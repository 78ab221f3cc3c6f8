#include "opencity/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "opencity/tokens.hpp"

namespace opencity {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string backend_to_string(BackendKind b) { return b == BackendKind::mock ? "mock" : "http"; }
BackendKind backend_from_string(const std::string& s) {
    if (s == "mock") return BackendKind::mock;
    if (s == "http") return BackendKind::http;
    throw Error("unknown backend: " + s);
}
std::string scheduler_to_string(ScheduleMode m) {
    return m == ScheduleMode::async ? "async" : "sequential";
}
ScheduleMode scheduler_from_string(const std::string& s) {
    if (s == "async") return ScheduleMode::async;
    if (s == "sequential") return ScheduleMode::sequential;
    throw Error("unknown scheduler: " + s);
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << content;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace

std::string RunConfig::to_json() const {
    json j;
    j["city"] = city;
    j["n_agents"] = n_agents;
    j["n_archetypes"] = n_archetypes;
    j["homes"] = homes;
    j["agent_kind"] = to_string(agent_kind);
    j["optimizer"] = to_string(optimizer);
    j["backend"] = backend_to_string(backend);
    j["scheduler"] = scheduler_to_string(scheduler);
    j["seed"] = seed;
    j["days"] = days;
    j["tick_minutes"] = tick_minutes;
    j["pool_capacity"] = pool_capacity;
    j["reuse_connections"] = reuse_connections;
    j["worker_count"] = worker_count;
    j["ipl"] = {{"M", ipl.bootstrap_count}, {"T", ipl.threshold}};
    j["latency"] = {{"t_init_ms", latency.t_init.count() / 1000.0},
                    {"t_connect_ms", latency.t_connect.count() / 1000.0},
                    {"t_teardown_ms", latency.t_teardown.count() / 1000.0},
                    {"t_wait_base_ms", latency.t_wait_base.count() / 1000.0},
                    {"t_per_token_ms", latency.t_per_token.count() / 1000.0}};
    j["epr"] = {{"rho", epr.rho},
                {"gamma", epr.gamma},
                {"tau", epr.tau},
                {"beta", epr.beta},
                {"distance_decay", epr.distance_decay}};
    j["reflect_threshold"] = reflect_threshold;
    j["perception_radius_km"] = perception_radius_km;
    j["candidate_cap"] = candidate_cap;
    j["http"] = {{"host", http.host},
                 {"port", http.port},
                 {"path", http.path},
                 {"model", http.model},
                 {"temperature", http.temperature},
                 {"api_key_env", http.api_key_env}};
    return j.dump(2) + "\n";
}

RunConfig RunConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig c;
    auto get = [&](const char* key, auto& into) {
        if (j.contains(key)) into = j.at(key).get<std::decay_t<decltype(into)>>();
    };
    get("city", c.city);
    get("n_agents", c.n_agents);
    get("n_archetypes", c.n_archetypes);
    get("homes", c.homes);
    if (j.contains("agent_kind")) c.agent_kind = agent_kind_from_string(j["agent_kind"]);
    if (j.contains("optimizer")) c.optimizer = prompting_mode_from_string(j["optimizer"]);
    if (j.contains("backend")) c.backend = backend_from_string(j["backend"]);
    if (j.contains("scheduler")) c.scheduler = scheduler_from_string(j["scheduler"]);
    get("seed", c.seed);
    get("days", c.days);
    get("tick_minutes", c.tick_minutes);
    get("pool_capacity", c.pool_capacity);
    get("reuse_connections", c.reuse_connections);
    get("worker_count", c.worker_count);
    if (j.contains("ipl")) {
        c.ipl.bootstrap_count = j["ipl"].value("M", c.ipl.bootstrap_count);
        c.ipl.threshold = j["ipl"].value("T", c.ipl.threshold);
    }
    if (j.contains("latency")) {
        const auto& l = j["latency"];
        auto dur = [&](const char* key, Duration dflt) {
            return l.contains(key) ? Duration(static_cast<int64_t>(l[key].get<double>() * 1000.0))
                                   : dflt;
        };
        c.latency.t_init = dur("t_init_ms", c.latency.t_init);
        c.latency.t_connect = dur("t_connect_ms", c.latency.t_connect);
        c.latency.t_teardown = dur("t_teardown_ms", c.latency.t_teardown);
        c.latency.t_wait_base = dur("t_wait_base_ms", c.latency.t_wait_base);
        c.latency.t_per_token = dur("t_per_token_ms", c.latency.t_per_token);
    }
    if (j.contains("epr")) {
        const auto& e = j["epr"];
        c.epr.rho = e.value("rho", c.epr.rho);
        c.epr.gamma = e.value("gamma", c.epr.gamma);
        c.epr.tau = e.value("tau", c.epr.tau);
        c.epr.beta = e.value("beta", c.epr.beta);
        c.epr.distance_decay = e.value("distance_decay", c.epr.distance_decay);
    }
    get("reflect_threshold", c.reflect_threshold);
    get("perception_radius_km", c.perception_radius_km);
    get("candidate_cap", c.candidate_cap);
    if (j.contains("http")) {
        const auto& h = j["http"];
        c.http.host = h.value("host", c.http.host);
        c.http.port = h.value("port", c.http.port);
        c.http.path = h.value("path", c.http.path);
        c.http.model = h.value("model", c.http.model);
        c.http.temperature = h.value("temperature", c.http.temperature);
        c.http.api_key_env = h.value("api_key_env", c.http.api_key_env);
    }
    return c;
}

RunConfig RunConfig::from_json_file(const std::string& path) {
    return from_json(read_file(path));
}

City RunConfig::load_city() const {
    if (city.rfind("synthetic:", 0) == 0) {
        // synthetic:<blocks>x<pois>@<segregation>
        int blocks = 0, pois = 0;
        double seg = 0.0;
        if (std::sscanf(city.c_str(), "synthetic:%dx%d@%lf", &blocks, &pois, &seg) != 3)
            throw Error("bad synthetic city spec: " + city);
        return gen_synthetic_city(blocks, pois, seg, seed);
    }
    if (city.empty()) return gen_synthetic_city(25, 8, 0.0, seed);
    return City::load_json(city);
}

std::vector<StaticProfile> RunConfig::make_population(const City& city_model) const {
    auto profiles = synthetic_archetype_population(
        n_agents, n_archetypes, static_cast<int>(city_model.blocks().size()), seed);
    return assign_homes_by_mix(std::move(profiles), city_model, homes == "even", seed);
}

Runtime make_runtime(const RunConfig& cfg, const std::vector<StaticProfile>& profiles) {
    Runtime rt;
    GatewayConfig gcfg;
    gcfg.pool_capacity = cfg.pool_capacity;
    gcfg.reuse_connections = cfg.reuse_connections;
    gcfg.worker_count = cfg.worker_count;
    gcfg.mode = cfg.scheduler;

    if (cfg.backend == BackendKind::mock) {
        rt.virtual_clock = std::make_shared<VirtualClock>();
        rt.mock = std::make_unique<MockBackend>(profiles, cfg.seed, cfg.latency);
        rt.gateway = std::make_unique<VirtualGateway>(gcfg, rt.virtual_clock, *rt.mock);
        rt.factory = std::make_unique<RequestFactory>(*rt.virtual_clock);
    } else {
        rt.gateway = std::make_unique<HttpGateway>(gcfg, cfg.http);
        static SteadyClock real_clock;
        rt.factory = std::make_unique<RequestFactory>(real_clock);
    }

    if (cfg.agent_kind == AgentKind::generative) {
        Ipl* ipl = nullptr;
        if (cfg.optimizer == PromptingMode::archetype ||
            cfg.optimizer == PromptingMode::group_distill) {
            rt.ipl = std::make_unique<Ipl>(cfg.ipl, *rt.gateway, *rt.factory);
            rt.ipl->ensure_assigned(profiles);
            ipl = rt.ipl.get();
        }
        rt.strategy = std::make_unique<PromptStrategy>(cfg.optimizer, *rt.gateway, *rt.factory, ipl);
    }
    return rt;
}

std::string trajectories_to_jsonl(const std::vector<Trajectory>& trajs) {
    std::ostringstream os;
    for (const auto& tr : trajs) {
        for (const auto& p : tr.points) {
            json j;
            j["agent"] = tr.agent_id;
            j["t"] = sim_time_to_iso(p.t);
            j["poi"] = p.poi;
            j["block"] = p.block;
            os << j.dump() << "\n";
        }
    }
    return os.str();
}

std::vector<Trajectory> trajectories_from_jsonl(const std::string& text, const City& city) {
    std::map<AgentId, Trajectory> by_agent;
    std::istringstream is(text);
    std::string line;
    static constexpr int64_t kEpochSecs = 1717372800;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        const AgentId id = j.at("agent").get<AgentId>();
        auto& tr = by_agent[id];
        tr.agent_id = id;
        TrajectoryPoint p;
        const auto epoch = parse_iso8601(j.at("t").get<std::string>());
        if (!epoch) throw Error("bad timestamp in trajectory line");
        p.t = std::chrono::seconds(*epoch - kEpochSecs);
        p.poi = j.at("poi").get<PoiId>();
        p.block = j.at("block").get<BlockId>();
        p.pos = city.poi(p.poi).pos;
        tr.points.push_back(p);
    }
    std::vector<Trajectory> out;
    out.reserve(by_agent.size());
    for (auto& [id, tr] : by_agent) out.push_back(std::move(tr));
    return out;
}

std::string memories_to_jsonl(const std::vector<std::vector<MemoryEntry>>& memories,
                              const std::vector<AgentId>& ids) {
    std::ostringstream os;
    for (size_t i = 0; i < memories.size(); ++i) {
        for (size_t k = 0; k < memories[i].size(); ++k) {
            const auto& e = memories[i][k];
            json j;
            j["agent"] = ids[i];
            j["entry"] = k;
            j["t"] = sim_time_to_iso(e.time);
            j["kind"] = e.kind == MemoryKind::observation
                            ? "observation"
                            : (e.kind == MemoryKind::plan ? "plan" : "reflection");
            j["text"] = e.text;
            j["importance"] = e.importance;
            j["location"] = e.location;
            os << j.dump() << "\n";
        }
    }
    return os.str();
}

std::string stats_to_json(const GatewayStats& s) {
    json j;
    j["requests_total"] = s.requests_total;
    j["tokens_in_total"] = s.tokens_in_total;
    j["tokens_out_total"] = s.tokens_out_total;
    j["connections_created"] = s.connections_created;
    j["connections_reused"] = s.connections_reused;
    j["wall_time_ms"] = s.wall_time.count() / 1000.0;
    j["t_init_sum_ms"] = s.per_phase_sums.t_init.count() / 1000.0;
    j["t_connect_sum_ms"] = s.per_phase_sums.t_connect.count() / 1000.0;
    j["t_transfer_wait_sum_ms"] = s.per_phase_sums.t_transfer_wait.count() / 1000.0;
    return j.dump(2) + "\n";
}

GatewayStats stats_from_json(const std::string& text) {
    const json j = json::parse(text);
    GatewayStats s;
    s.requests_total = j.at("requests_total").get<int64_t>();
    s.tokens_in_total = j.at("tokens_in_total").get<int64_t>();
    s.tokens_out_total = j.at("tokens_out_total").get<int64_t>();
    s.connections_created = j.at("connections_created").get<int64_t>();
    s.connections_reused = j.at("connections_reused").get<int64_t>();
    s.wall_time = Duration(static_cast<int64_t>(j.at("wall_time_ms").get<double>() * 1000.0));
    s.per_phase_sums.t_init =
        Duration(static_cast<int64_t>(j.at("t_init_sum_ms").get<double>() * 1000.0));
    s.per_phase_sums.t_connect =
        Duration(static_cast<int64_t>(j.at("t_connect_sum_ms").get<double>() * 1000.0));
    s.per_phase_sums.t_transfer_wait =
        Duration(static_cast<int64_t>(j.at("t_transfer_wait_sum_ms").get<double>() * 1000.0));
    return s;
}

namespace {

// per-block segregation from a run's trajectories + profiles
std::map<BlockId, double> run_segregation(const std::vector<Trajectory>& trajs,
                                          const std::vector<StaticProfile>& profiles) {
    std::map<AgentId, int> quintile;
    for (const auto& p : profiles) quintile[p.agent_id] = p.income_quintile;
    metrics::SegregationTable table;
    for (const auto& tr : trajs) {
        const int q = quintile.at(tr.agent_id);
        for (const auto& pt : tr.points) table.add_visit(pt.block, q);
    }
    return metrics::segregation_index(table);
}

std::string profiles_to_json(const std::vector<StaticProfile>& profiles) {
    json arr = json::array();
    for (const auto& p : profiles) {
        arr.push_back({{"agent_id", p.agent_id},
                       {"age", p.age},
                       {"gender", p.gender},
                       {"occupation", p.occupation},
                       {"education", p.education},
                       {"income_quintile", p.income_quintile},
                       {"home_block", p.home_block}});
    }
    return arr.dump(2) + "\n";
}

std::vector<StaticProfile> profiles_from_json(const std::string& text) {
    const json arr = json::parse(text);
    std::vector<StaticProfile> out;
    for (const auto& j : arr) {
        StaticProfile p;
        p.agent_id = j.at("agent_id").get<AgentId>();
        p.age = j.at("age").get<int>();
        p.gender = j.at("gender").get<std::string>();
        p.occupation = j.at("occupation").get<std::string>();
        p.education = j.at("education").get<std::string>();
        p.income_quintile = j.at("income_quintile").get<int>();
        p.home_block = j.at("home_block").get<BlockId>();
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace

RunRecord run_simulation(const RunConfig& cfg, const std::string& runs_root,
                         const std::string& dir_name) {
    const City city = cfg.load_city();
    const auto profiles = cfg.make_population(city);
    Runtime rt = make_runtime(cfg, profiles);

    SimConfig scfg;
    scfg.days = cfg.days;
    scfg.tick_minutes = cfg.tick_minutes;
    scfg.agent_kind = cfg.agent_kind;
    scfg.seed = cfg.seed;
    scfg.perception_radius_km = cfg.perception_radius_km;
    scfg.candidate_cap = cfg.candidate_cap;
    scfg.reflect_threshold = cfg.reflect_threshold;
    scfg.epr = cfg.epr;

    Simulation sim(scfg, city, profiles, *rt.gateway, *rt.factory, rt.strategy.get());
    SimOutputs out = sim.run();

    metrics::MetricsReport report;
    const auto seg = run_segregation(out.trajectories, profiles);
    for (const auto& [b, s] : seg) report.per_block_segregation.push_back(s);

    std::string dir = dir_name;
    if (dir.empty()) {
        std::ostringstream os;
        os << "run-" << std::hex << hash_mix(cfg.seed, fnv1a64(cfg.to_json())) << "-" << std::dec
           << cfg.seed;
        dir = os.str();
    }
    const fs::path root = fs::path(runs_root) / dir;
    fs::create_directories(root);

    std::vector<AgentId> ids;
    ids.reserve(profiles.size());
    for (const auto& a : sim.agents()) ids.push_back(a.profile.agent_id);

    write_file((root / "config.json").string(), cfg.to_json());
    write_file((root / "stats.json").string(), stats_to_json(out.gateway_stats));
    write_file((root / "metrics.json").string(), report.to_json());
    write_file((root / "trajs.jsonl").string(), trajectories_to_jsonl(out.trajectories));
    write_file((root / "memories.jsonl").string(), memories_to_jsonl(out.memories, ids));
    write_file((root / "profiles.json").string(), profiles_to_json(profiles));
    if (rt.ipl) write_file((root / "groups.json").string(), rt.ipl->groups_json());
    {
        std::ostringstream ev;
        for (const auto& e : out.event_log) ev << e << "\n";
        write_file((root / "events.jsonl").string(), ev.str());
    }

    RunRecord rec;
    rec.dir = root.string();
    rec.config = cfg;
    rec.stats = out.gateway_stats;
    rec.report = report;
    rt.gateway->shutdown();
    return rec;
}

RunRecord RunRecord::load(const std::string& dir) {
    RunRecord rec;
    rec.dir = dir;
    rec.config = RunConfig::from_json(read_file((fs::path(dir) / "config.json").string()));
    rec.stats = stats_from_json(read_file((fs::path(dir) / "stats.json").string()));
    rec.report =
        metrics::MetricsReport::from_json(read_file((fs::path(dir) / "metrics.json").string()));
    return rec;
}

BenchmarkReport run_benchmark(const RunConfig& optimized, const RunConfig& baseline) {
    // the two configs may differ only in optimization flags
    RunConfig a = optimized, b = baseline;
    a.optimizer = b.optimizer;
    a.scheduler = b.scheduler;
    a.reuse_connections = b.reuse_connections;
    a.pool_capacity = b.pool_capacity;
    a.worker_count = b.worker_count;
    if (a.to_json() != b.to_json())
        throw ConfigMismatch("benchmark configs differ beyond optimization flags");

    auto run_once = [](const RunConfig& cfg) {
        const City city = cfg.load_city();
        const auto profiles = cfg.make_population(city);
        Runtime rt = make_runtime(cfg, profiles);
        SimConfig scfg;
        scfg.days = cfg.days;
        scfg.tick_minutes = cfg.tick_minutes;
        scfg.agent_kind = cfg.agent_kind;
        scfg.seed = cfg.seed;
        scfg.perception_radius_km = cfg.perception_radius_km;
        scfg.candidate_cap = cfg.candidate_cap;
        scfg.reflect_threshold = cfg.reflect_threshold;
        scfg.epr = cfg.epr;
        Simulation sim(scfg, city, profiles, *rt.gateway, *rt.factory, rt.strategy.get());
        (void)sim.run();
        GatewayStats stats = rt.gateway->gateway_stats();
        rt.gateway->shutdown();
        return stats;
    };

    BenchmarkReport rep;
    rep.baseline_stats = run_once(baseline);
    rep.optimized_stats = run_once(optimized);
    rep.baseline_seconds = to_seconds(rep.baseline_stats.wall_time);
    rep.optimized_seconds = to_seconds(rep.optimized_stats.wall_time);
    rep.speedup = rep.optimized_seconds > 0 ? rep.baseline_seconds / rep.optimized_seconds : 0.0;
    rep.seconds_per_agent = rep.optimized_seconds / std::max(1, optimized.n_agents);
    const auto rates = reduction_rates(rep.baseline_stats, rep.optimized_stats);
    rep.rr = rates.rr;
    rep.tr = rates.tr;
    return rep;
}

FaithfulnessResult faithfulness_experiment(PromptingMode method, const FaithfulnessSetup& setup) {
    // a small city supplies candidate venues; agents share one fixed context
    const City city = gen_synthetic_city(9, 4, 0.0, setup.seed);
    auto profiles =
        synthetic_archetype_population(setup.n_agents, setup.n_archetypes,
                                       static_cast<int>(city.blocks().size()), setup.seed);
    std::vector<PoiId> candidates;
    for (int i = 0; i < setup.n_candidates; ++i) candidates.push_back(i);
    const std::string context = "weekday noon, deciding where to go next";

    auto run_method = [&](PromptingMode mode, GatewayStats* stats_out) {
        auto clock = std::make_shared<VirtualClock>();
        MockBackend backend(profiles, setup.seed);
        GatewayConfig gcfg;
        VirtualGateway gw(gcfg, clock, backend);
        RequestFactory factory(*clock);
        std::unique_ptr<Ipl> ipl;
        Ipl* ipl_ptr = nullptr;
        if (mode == PromptingMode::archetype || mode == PromptingMode::group_distill) {
            ipl = std::make_unique<Ipl>(IplConfig{}, gw, factory);
            ipl->ensure_assigned(profiles);
            ipl_ptr = ipl.get();
        }
        PromptStrategy strategy(mode, gw, factory, ipl_ptr);

        // reps x agents selection matrix
        std::vector<std::vector<PoiId>> picks(profiles.size());
        for (int rep = 0; rep < setup.reps; ++rep) {
            std::vector<DecisionIntent> intents;
            intents.reserve(profiles.size());
            for (const auto& p : profiles) {
                intents.push_back({p.agent_id, prompts::location_choice(p, "", context, candidates)});
            }
            auto answers = strategy.decide(intents);
            for (size_t i = 0; i < profiles.size(); ++i) {
                picks[i].push_back(static_cast<PoiId>(std::stol(answers.at(profiles[i].agent_id))));
            }
        }
        if (stats_out) *stats_out = gw.gateway_stats();
        gw.shutdown();
        return picks;
    };

    GatewayStats raw_stats;
    const auto raw_picks = run_method(PromptingMode::raw, &raw_stats);
    GatewayStats stats = raw_stats;
    const auto method_picks =
        method == PromptingMode::raw ? raw_picks : run_method(method, &stats);

    auto empirical = [&](const std::vector<PoiId>& picks) {
        std::vector<double> dist(candidates.size(), 0.0);
        for (PoiId c : picks) {
            const auto it = std::find(candidates.begin(), candidates.end(), c);
            dist[static_cast<size_t>(it - candidates.begin())] += 1.0;
        }
        for (double& v : dist) v /= static_cast<double>(picks.size());
        return dist;
    };

    FaithfulnessResult res;
    std::vector<double> jsds;
    int64_t equal = 0, total = 0;
    double t1_sum = 0.0;
    for (size_t i = 0; i < profiles.size(); ++i) {
        const auto ref = empirical(raw_picks[i]);
        const auto got = empirical(method_picks[i]);
        jsds.push_back(metrics::jsd(got, ref));
        std::vector<int> selections;
        for (size_t r = 0; r < method_picks[i].size(); ++r) {
            const auto it = std::find(candidates.begin(), candidates.end(), method_picks[i][r]);
            selections.push_back(static_cast<int>(it - candidates.begin()));
            equal += method_picks[i][r] == raw_picks[i][r];
            ++total;
        }
        t1_sum += metrics::top1_hit_rate(selections, ref);
    }
    double mean = 0.0;
    for (double v : jsds) mean += v;
    mean /= static_cast<double>(jsds.size());
    double var = 0.0;
    for (double v : jsds) var += (v - mean) * (v - mean);
    var /= static_cast<double>(jsds.size());

    res.jsd_mean = mean;
    res.jsd_std = std::sqrt(var);
    res.t1 = t1_sum / static_cast<double>(profiles.size());
    res.equality_rate = static_cast<double>(equal) / static_cast<double>(total);
    res.requests = stats.requests_total;
    res.tokens = stats.tokens_in_total + stats.tokens_out_total;
    return res;
}

CounterfactualResult counterfactual_even_income(const RunConfig& cfg) {
    auto run_with_homes = [&](bool even) {
        RunConfig c = cfg;
        c.agent_kind = AgentKind::epr;
        c.homes = even ? "even" : "mix";
        const City city = c.load_city();
        const auto profiles = c.make_population(city);
        Runtime rt = make_runtime(c, profiles);
        SimConfig scfg;
        scfg.days = c.days;
        scfg.tick_minutes = c.tick_minutes;
        scfg.agent_kind = AgentKind::epr;
        scfg.seed = c.seed;
        scfg.epr = c.epr;
        Simulation sim(scfg, city, profiles, *rt.gateway, *rt.factory, nullptr);
        SimOutputs out = sim.run();
        rt.gateway->shutdown();
        return run_segregation(out.trajectories, profiles);
    };

    CounterfactualResult res;
    for (const auto& [b, s] : run_with_homes(false)) res.s_original.push_back(s);
    for (const auto& [b, s] : run_with_homes(true)) res.s_even.push_back(s);
    auto mean = [](const std::vector<double>& v) {
        if (v.empty()) return 0.0;
        double m = 0.0;
        for (double x : v) m += x;
        return m / static_cast<double>(v.size());
    };
    res.mean_original = mean(res.s_original);
    res.mean_even = mean(res.s_even);
    return res;
}

InterrogateAnswer interrogate(const RunRecord& run, AgentId agent, const std::string& question) {
    const auto profiles = profiles_from_json(read_file((fs::path(run.dir) / "profiles.json").string()));
    const StaticProfile* profile = nullptr;
    for (const auto& p : profiles) {
        if (p.agent_id == agent) profile = &p;
    }
    if (!profile) throw UnknownAgent("agent " + std::to_string(agent) + " not in this run");

    // load this agent's memory entries
    std::vector<std::pair<int, std::string>> entries;
    {
        std::istringstream is(read_file((fs::path(run.dir) / "memories.jsonl").string()));
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            const json j = json::parse(line);
            if (j.at("agent").get<AgentId>() != agent) continue;
            entries.emplace_back(j.at("entry").get<int>(), j.at("text").get<std::string>());
        }
    }

    // retrieval: keyword overlap with the question, top-k by (score, recency)
    auto words_of = [](const std::string& text) {
        std::set<std::string> words;
        std::istringstream ws(text);
        std::string w;
        while (ws >> w) {
            std::string lw;
            for (char ch : w) {
                if (std::isalnum(static_cast<unsigned char>(ch)))
                    lw += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
            }
            if (lw.size() > 2) words.insert(lw);
        }
        return words;
    };
    const auto q_words = words_of(question);
    // stem-lite overlap: words match when one is a prefix of the other
    auto words_match = [](const std::string& a, const std::string& b) {
        if (a == b) return true;
        if (a.size() < 4 || b.size() < 4) return false;
        const auto& shorter = a.size() <= b.size() ? a : b;
        const auto& longer = a.size() <= b.size() ? b : a;
        return longer.compare(0, shorter.size(), shorter) == 0;
    };
    std::vector<std::pair<int, std::pair<int, std::string>>> scored;  // (score, entry)
    for (const auto& e : entries) {
        int score = 0;
        for (const auto& w : words_of(e.second)) {
            for (const auto& q : q_words) score += words_match(w, q) ? 1 : 0;
        }
        if (score > 0) scored.emplace_back(score, e);
    }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    if (scored.size() > 8) scored.resize(8);

    std::vector<std::pair<int, std::string>> retrieved;
    InterrogateAnswer ans;
    for (const auto& [score, e] : scored) {
        retrieved.push_back(e);
        ans.cited_entries.push_back(e.first);
    }

    // one raw request against the run's backend
    auto clock = std::make_shared<VirtualClock>();
    MockBackend backend(profiles, run.config.seed, run.config.latency);
    VirtualGateway gw(GatewayConfig{}, clock, backend);
    RequestFactory factory(*clock);
    auto req = factory.make(
        prompts::render_raw(prompts::interrogate(*profile, question, retrieved), agent), {agent});
    auto handle = gw.submit(std::move(req));
    const LlmResponse resp = gw.await_response(handle);
    const auto answers = prompts::parse_answers(resp.text);
    ans.text = answers.at(0).second;
    gw.shutdown();
    return ans;
}

}  // namespace opencity
