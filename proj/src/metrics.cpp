#include "opencity/metrics.hpp"

#include <cmath>
#include <numeric>

#include <json.hpp>

#include "opencity/errors.hpp"

namespace opencity::metrics {

using nlohmann::json;

double radius_of_gyration(const Trajectory& traj) {
    if (traj.points.empty()) throw EmptyTrajectory("radius_of_gyration: no points");
    const double n = static_cast<double>(traj.points.size());
    Point cm{0, 0};
    for (const auto& p : traj.points) {
        cm.x += p.pos.x;
        cm.y += p.pos.y;
    }
    cm.x /= n;
    cm.y /= n;
    double acc = 0.0;
    for (const auto& p : traj.points) {
        const double dx = p.pos.x - cm.x, dy = p.pos.y - cm.y;
        acc += dx * dx + dy * dy;
    }
    return std::sqrt(acc / n);
}

ODMatrix od_matrix(const std::vector<Trajectory>& trajs, const City& city) {
    ODMatrix od;
    od.n_blocks = static_cast<int>(city.blocks().size());
    od.counts.assign(static_cast<size_t>(od.n_blocks) * od.n_blocks, 0);
    od.normalized.assign(od.counts.size(), 0.0);
    for (const auto& traj : trajs) {
        for (size_t i = 1; i < traj.points.size(); ++i) {
            const BlockId from = traj.points[i - 1].block;
            const BlockId to = traj.points[i].block;
            if (from < 0 || from >= od.n_blocks || to < 0 || to >= od.n_blocks)
                throw UnknownBlock("od_matrix: trajectory references unknown block");
            if (from == to) continue;  // flow between block areas only
            od.at(from, to) += 1;
            od.total += 1;
        }
    }
    if (od.total > 0) {
        for (size_t i = 0; i < od.counts.size(); ++i)
            od.normalized[i] = static_cast<double>(od.counts[i]) / static_cast<double>(od.total);
    }
    return od;
}

double od_mse(const ODMatrix& a, const ODMatrix& b) {
    if (a.n_blocks != b.n_blocks) throw ShapeMismatch("od_mse: block sets differ");
    double acc = 0.0;
    for (size_t i = 0; i < a.normalized.size(); ++i) {
        const double d = a.normalized[i] - b.normalized[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.normalized.size());
}

std::map<BlockId, double> segregation_index(const SegregationTable& table) {
    std::map<BlockId, double> out;
    for (const auto& [block, counts] : table.visits) {
        const double total = static_cast<double>(
            std::accumulate(counts.begin(), counts.end(), int64_t{0}));
        if (total <= 0) continue;  // unvisited blocks are excluded
        double s = 0.0;
        for (int64_t c : counts) s += std::abs(static_cast<double>(c) / total - 0.2);
        out[block] = s * 5.0 / 8.0;
    }
    return out;
}

namespace {
void check_normalized(const std::vector<double>& p, const char* name) {
    double sum = 0.0;
    for (double v : p) {
        if (v < 0.0) throw NotNormalized(std::string(name) + ": negative mass");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw NotNormalized(std::string(name) + ": sums to " + std::to_string(sum));
}

double kl_base2(const std::vector<double>& p, const std::vector<double>& m) {
    double acc = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) acc += p[i] * std::log2(p[i] / m[i]);
    }
    return acc;
}
}  // namespace

double jsd(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) throw ShapeMismatch("jsd: supports differ");
    check_normalized(p, "jsd p");
    check_normalized(q, "jsd q");
    std::vector<double> m(p.size());
    for (size_t i = 0; i < p.size(); ++i) m[i] = 0.5 * (p[i] + q[i]);
    return 0.5 * kl_base2(p, m) + 0.5 * kl_base2(q, m);
}

double top1_hit_rate(const std::vector<int>& selections, const std::vector<double>& reference) {
    if (selections.empty()) throw EmptySelections("top1_hit_rate: no repetitions");
    check_normalized(reference, "top1 reference");
    int mode = 0;
    for (size_t i = 1; i < reference.size(); ++i) {
        if (reference[i] > reference[mode]) mode = static_cast<int>(i);
    }
    int64_t hits = 0;
    for (int s : selections) {
        if (s == mode) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(selections.size());
}

double mse(const std::vector<double>& real, const std::vector<double>& sim) {
    if (real.size() != sim.size()) throw LengthMismatch("mse: value vectors differ in length");
    if (real.empty()) return 0.0;
    double acc = 0.0;
    for (size_t i = 0; i < real.size(); ++i) {
        const double d = real[i] - sim[i];
        acc += d * d;
    }
    return acc / static_cast<double>(real.size());
}

std::string MetricsReport::to_json() const {
    json j;
    j["r_mse"] = r_mse;
    j["od_mse"] = od_mse;
    j["s_mse"] = s_mse;
    j["jsd_mean"] = jsd_mean;
    j["jsd_std"] = jsd_std;
    j["t1"] = t1;
    j["rr"] = rr;
    j["tr"] = tr;
    j["speedup"] = speedup;
    j["per_block_segregation"] = per_block_segregation;
    return j.dump(2) + "\n";
}

MetricsReport MetricsReport::from_json(const std::string& text) {
    const json j = json::parse(text);
    MetricsReport r;
    r.r_mse = j.at("r_mse").get<double>();
    r.od_mse = j.at("od_mse").get<double>();
    r.s_mse = j.at("s_mse").get<double>();
    r.jsd_mean = j.at("jsd_mean").get<double>();
    r.jsd_std = j.at("jsd_std").get<double>();
    r.t1 = j.at("t1").get<double>();
    r.rr = j.at("rr").get<double>();
    r.tr = j.at("tr").get<double>();
    r.speedup = j.at("speedup").get<double>();
    r.per_block_segregation = j.at("per_block_segregation").get<std::vector<double>>();
    return r;
}

}  // namespace opencity::metrics
