// Command-line operator surface: simulate, benchmark, faithfulness,
// counterfactual, ingest, gen-city, interrogate, report.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "opencity/experiments.hpp"

using namespace opencity;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void add_config_flags(CLI::App* cmd, RunConfig& cfg, std::string& config_path,
                      std::string& optimizer, std::string& agent_kind, std::string& backend,
                      std::string& scheduler) {
    cmd->add_option("--config", config_path, "run config JSON (flags override it)");
    cmd->add_option("--city", cfg.city, "city JSON path or synthetic:<blocks>x<pois>@<seg>");
    cmd->add_option("--agents,--n-agents", cfg.n_agents, "number of agents");
    cmd->add_option("--archetypes", cfg.n_archetypes, "synthetic population archetypes");
    cmd->add_option("--homes", cfg.homes, "home assignment: mix|even");
    cmd->add_option("--agent-kind", agent_kind, "generative|epr");
    cmd->add_option("--optimizer", optimizer, "raw|batch|archetype|group_distill");
    cmd->add_option("--backend", backend, "mock|http");
    cmd->add_option("--scheduler", scheduler, "async|sequential");
    cmd->add_option("--seed", cfg.seed, "run seed");
    cmd->add_option("--days", cfg.days, "simulated days");
    cmd->add_option("--pool-capacity", cfg.pool_capacity, "connection pool capacity");
    cmd->add_option("--reuse-connections", cfg.reuse_connections, "reuse pooled connections");
    cmd->add_option("--worker-count", cfg.worker_count, "local-task worker count");
    cmd->add_option("--ipl-m", cfg.ipl.bootstrap_count, "IPL bootstrap size M");
    cmd->add_option("--ipl-t", cfg.ipl.threshold, "IPL membership threshold T");
}

RunConfig finalize_config(const std::string& config_path, RunConfig flags,
                          const std::string& optimizer, const std::string& agent_kind,
                          const std::string& backend, const std::string& scheduler,
                          CLI::App* cmd) {
    RunConfig cfg = flags;
    if (!config_path.empty()) {
        cfg = RunConfig::from_json_file(config_path);
        // re-apply only the flags the user actually passed
        auto passed = [&](const std::string& name) { return cmd->count(name) > 0; };
        if (passed("--city")) cfg.city = flags.city;
        if (passed("--agents")) cfg.n_agents = flags.n_agents;
        if (passed("--archetypes")) cfg.n_archetypes = flags.n_archetypes;
        if (passed("--homes")) cfg.homes = flags.homes;
        if (passed("--seed")) cfg.seed = flags.seed;
        if (passed("--days")) cfg.days = flags.days;
        if (passed("--pool-capacity")) cfg.pool_capacity = flags.pool_capacity;
        if (passed("--reuse-connections")) cfg.reuse_connections = flags.reuse_connections;
        if (passed("--worker-count")) cfg.worker_count = flags.worker_count;
        if (passed("--ipl-m")) cfg.ipl.bootstrap_count = flags.ipl.bootstrap_count;
        if (passed("--ipl-t")) cfg.ipl.threshold = flags.ipl.threshold;
    }
    if (!optimizer.empty()) cfg.optimizer = prompting_mode_from_string(optimizer);
    if (!agent_kind.empty()) cfg.agent_kind = agent_kind_from_string(agent_kind);
    if (!backend.empty())
        cfg.backend = backend == "http" ? BackendKind::http : BackendKind::mock;
    if (!scheduler.empty())
        cfg.scheduler = scheduler == "sequential" ? ScheduleMode::sequential : ScheduleMode::async;
    return cfg;
}

std::string run_dir_name(uint64_t seed) {
    std::ostringstream os;
    os << std::chrono::duration_cast<std::chrono::seconds>(
              std::chrono::system_clock::now().time_since_epoch())
              .count()
       << "-" << seed;
    return os.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"opencity: scalable urban LLM-agent simulation"};
    app.require_subcommand(1);

    RunConfig flags;
    std::string config_path, optimizer, agent_kind, backend, scheduler;
    std::string runs_root = "runs";

    // --- simulate ---
    auto* sim_cmd = app.add_subcommand("simulate", "run one simulation and persist the run dir");
    add_config_flags(sim_cmd, flags, config_path, optimizer, agent_kind, backend, scheduler);
    sim_cmd->add_option("--runs-root", runs_root, "directory for run outputs");

    // --- benchmark ---
    auto* bench_cmd = app.add_subcommand("benchmark", "baseline-vs-optimized acceleration run");
    add_config_flags(bench_cmd, flags, config_path, optimizer, agent_kind, backend, scheduler);
    bench_cmd->add_option("--runs-root", runs_root, "directory for run outputs");
    std::string scal_list;
    bench_cmd->add_option("--scalability", scal_list,
                          "comma-separated agent counts for the scalability curve");

    // --- faithfulness ---
    auto* faith_cmd = app.add_subcommand("faithfulness", "Table-2 style JSD/T1 experiment");
    std::string faith_method = "group_distill";
    FaithfulnessSetup setup;
    faith_cmd->add_option("--method", faith_method, "raw|batch|archetype|group_distill");
    faith_cmd->add_option("--agents", setup.n_agents, "agents sampled");
    faith_cmd->add_option("--reps", setup.reps, "repetitions per agent");
    faith_cmd->add_option("--candidates", setup.n_candidates, "candidate venues");
    faith_cmd->add_option("--archetypes", setup.n_archetypes, "population archetypes");
    faith_cmd->add_option("--seed", setup.seed, "seed");

    // --- counterfactual ---
    auto* cf_cmd = app.add_subcommand("counterfactual",
                                      "even-income redistribution experiment (EPR agents)");
    add_config_flags(cf_cmd, flags, config_path, optimizer, agent_kind, backend, scheduler);
    cf_cmd->add_option("--runs-root", runs_root, "directory for run outputs");

    // --- ingest ---
    auto* ingest_cmd = app.add_subcommand("ingest", "preprocess raw check-ins into trajectories");
    std::string ingest_input, ingest_city, ingest_out;
    int utc_offset = 0;
    ingest_cmd->add_option("--input", ingest_input, "check-ins CSV")->required();
    ingest_cmd->add_option("--city", ingest_city, "city JSON (for block resolution)");
    ingest_cmd->add_option("--out", ingest_out, "output trajectories JSONL")->required();
    ingest_cmd->add_option("--utc-offset", utc_offset, "city timezone offset hours");

    // --- gen-city ---
    auto* gen_cmd = app.add_subcommand("gen-city", "write a synthetic city JSON");
    int gen_blocks = 25, gen_pois = 8;
    double gen_seg = 0.0;
    uint64_t gen_seed = 1;
    std::string gen_out = "city.json";
    gen_cmd->add_option("--blocks", gen_blocks, "block count (rounded to a rectangle)");
    gen_cmd->add_option("--pois-per-block", gen_pois, "POIs per block");
    gen_cmd->add_option("--segregation", gen_seg, "residential segregation level in [0,1]");
    gen_cmd->add_option("--seed", gen_seed, "seed");
    gen_cmd->add_option("--out", gen_out, "output path")->required();

    // --- interrogate ---
    auto* ask_cmd = app.add_subcommand("interrogate", "ask an agent about a finished run");
    std::string ask_run;
    int ask_agent = 0;
    std::string ask_question;
    ask_cmd->add_option("--run", ask_run, "run directory")->required();
    ask_cmd->add_option("--agent", ask_agent, "agent id")->required();
    ask_cmd->add_option("--question", ask_question, "one-shot question (omit for a REPL)");

    // --- report ---
    auto* report_cmd = app.add_subcommand("report", "emit report files for a run");
    std::string report_run, report_format = "json";
    report_cmd->add_option("--run", report_run, "run directory")->required();
    report_cmd->add_option("--format", report_format, "json|markdown|svg-plots");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sim_cmd) {
            const RunConfig cfg = finalize_config(config_path, flags, optimizer, agent_kind,
                                                  backend, scheduler, sim_cmd);
            const RunRecord rec = run_simulation(cfg, runs_root, run_dir_name(cfg.seed));
            std::cout << "run written to " << rec.dir << "\n"
                      << stats_to_json(rec.stats);
            return 0;
        }
        if (*bench_cmd) {
            RunConfig optimized = finalize_config(config_path, flags, optimizer, agent_kind,
                                                  backend, scheduler, bench_cmd);
            if (optimizer.empty()) optimized.optimizer = PromptingMode::group_distill;
            RunConfig baseline = optimized;
            baseline.optimizer = PromptingMode::raw;
            baseline.scheduler = ScheduleMode::sequential;
            baseline.reuse_connections = false;

            const BenchmarkReport rep = run_benchmark(optimized, baseline);
            json out;
            out["time_per_agent_s"] = rep.seconds_per_agent;
            out["speedup"] = rep.speedup;
            out["rr"] = rep.rr;
            out["tr"] = rep.tr;
            out["baseline_s"] = rep.baseline_seconds;
            out["optimized_s"] = rep.optimized_seconds;
            std::cout << out.dump(2) << "\n";

            if (!scal_list.empty()) {
                json scal = json::array();
                std::istringstream ls(scal_list);
                std::string tok;
                while (std::getline(ls, tok, ',')) {
                    RunConfig o = optimized, b = baseline;
                    o.n_agents = b.n_agents = std::stoi(tok);
                    const BenchmarkReport r = run_benchmark(o, b);
                    scal.push_back({{"agents", o.n_agents},
                                    {"seconds_per_agent", r.seconds_per_agent},
                                    {"speedup", r.speedup}});
                    std::cerr << "scalability: " << o.n_agents << " agents -> "
                              << r.seconds_per_agent << " s/agent\n";
                }
                fs::create_directories(runs_root);
                std::ofstream(fs::path(runs_root) / "scalability.json") << scal.dump(2) << "\n";
            }
            return 0;
        }
        if (*faith_cmd) {
            const auto method = prompting_mode_from_string(faith_method);
            const FaithfulnessResult res = faithfulness_experiment(method, setup);
            json out;
            out["method"] = faith_method;
            out["jsd_mean"] = res.jsd_mean;
            out["jsd_std"] = res.jsd_std;
            out["t1"] = res.t1;
            out["equality_rate"] = res.equality_rate;
            out["requests"] = res.requests;
            out["tokens"] = res.tokens;
            std::cout << out.dump(2) << "\n";
            return 0;
        }
        if (*cf_cmd) {
            RunConfig cfg = finalize_config(config_path, flags, optimizer, agent_kind, backend,
                                            scheduler, cf_cmd);
            const CounterfactualResult res = counterfactual_even_income(cfg);
            json out;
            out["mean_original"] = res.mean_original;
            out["mean_even"] = res.mean_even;
            out["s_original"] = res.s_original;
            out["s_even"] = res.s_even;
            const fs::path dir = fs::path(runs_root) / ("counterfactual-" + run_dir_name(cfg.seed));
            fs::create_directories(dir);
            std::ofstream(dir / "counterfactual.json") << out.dump(2) << "\n";
            std::cout << "mean S original " << res.mean_original << " -> even " << res.mean_even
                      << "\nwritten to " << dir.string() << "\n";
            return 0;
        }
        if (*ingest_cmd) {
            IngestSummary summary;
            auto checkins = parse_checkins_csv(ingest_input, summary);
            auto days = segment_and_filter(std::move(checkins), utc_offset, summary);

            std::ostringstream os;
            for (const auto& d : days) {
                for (const auto& c : d.points) {
                    json j;
                    j["user"] = d.user_id;
                    j["epoch"] = c.epoch_secs;
                    j["lat"] = c.lat;
                    j["lon"] = c.lon;
                    if (c.poi_id) j["poi"] = *c.poi_id;
                    os << j.dump() << "\n";
                }
            }
            std::ofstream(ingest_out) << os.str();

            json sum;
            sum["rows_read"] = summary.rows_read;
            sum["rows_unparseable"] = summary.rows_unparseable;
            sum["duplicate_timestamps"] = summary.duplicate_timestamps;
            sum["days_total"] = summary.days_total;
            sum["days_kept"] = summary.days_kept;
            sum["users_kept"] = summary.users_kept;
            std::cout << sum.dump(2) << "\n";
            return 0;
        }
        if (*gen_cmd) {
            const City city = gen_synthetic_city(gen_blocks, gen_pois, gen_seg, gen_seed);
            city.save_json(gen_out);
            std::cout << "city with " << city.blocks().size() << " blocks and "
                      << city.pois().size() << " POIs written to " << gen_out << "\n";
            return 0;
        }
        if (*ask_cmd) {
            const RunRecord rec = RunRecord::load(ask_run);
            auto ask = [&](const std::string& q) {
                const InterrogateAnswer ans = interrogate(rec, ask_agent, q);
                std::cout << ans.text << "\n";
                if (!ans.cited_entries.empty()) {
                    std::cout << "cited entries:";
                    for (int id : ans.cited_entries) std::cout << " " << id;
                    std::cout << "\n";
                }
            };
            if (!ask_question.empty()) {
                ask(ask_question);
                return 0;
            }
            std::cout << "interrogating agent " << ask_agent << " (empty line quits)\n";
            std::string line;
            while (std::cout << "> " << std::flush, std::getline(std::cin, line)) {
                if (line.empty()) break;
                ask(line);
            }
            return 0;
        }
        if (*report_cmd) {
            const RunRecord rec = RunRecord::load(report_run);
            ReportFormat fmt = ReportFormat::json;
            if (report_format == "markdown") fmt = ReportFormat::markdown;
            else if (report_format == "svg-plots") fmt = ReportFormat::svg_plots;
            else if (report_format != "json") throw Error("unknown format: " + report_format);
            for (const auto& path : emit_report(rec, fmt)) std::cout << path << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
