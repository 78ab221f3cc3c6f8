#include "opencity/agent.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "opencity/errors.hpp"

namespace opencity {

int importance_for(const std::string& text) {
    static const std::vector<std::pair<std::string, int>> table = {
        {"no reachable venue", 1}, {"insight", 7}, {"plan", 5},  {"work", 6},
        {"health", 6},             {"education", 5}, {"food", 4}, {"shopping", 4},
        {"leisure", 3},            {"transport", 2},
    };
    for (const auto& [kw, score] : table) {
        if (text.find(kw) != std::string::npos) return score;
    }
    return 3;
}

namespace {
std::optional<int> parse_hhmm(const std::string& s) {
    if (s.size() != 5 || s[2] != ':') return std::nullopt;
    if (!std::isdigit(static_cast<unsigned char>(s[0])) ||
        !std::isdigit(static_cast<unsigned char>(s[1])) ||
        !std::isdigit(static_cast<unsigned char>(s[3])) ||
        !std::isdigit(static_cast<unsigned char>(s[4])))
        return std::nullopt;
    const int h = (s[0] - '0') * 10 + (s[1] - '0');
    const int m = (s[3] - '0') * 10 + (s[4] - '0');
    if (h > 23 || m > 59) return std::nullopt;
    return h * 60 + m;
}
}  // namespace

std::optional<DailyPlan> parse_plan(const std::string& text, const std::string& date) {
    DailyPlan plan;
    plan.date = date;
    std::string window;
    std::istringstream is(text);
    std::vector<std::string> parts;
    {
        // split on " / "
        std::string cur;
        for (size_t i = 0; i < text.size(); ++i) {
            if (i + 2 < text.size() && text[i] == ' ' && text[i + 1] == '/' && text[i + 2] == ' ') {
                parts.push_back(cur);
                cur.clear();
                i += 2;
            } else {
                cur += text[i];
            }
        }
        if (!cur.empty()) parts.push_back(cur);
    }
    for (const auto& part : parts) {
        std::istringstream ps(part);
        std::string span, activity, category;
        if (!(ps >> span >> activity >> category)) return std::nullopt;
        const size_t dash = span.find('-');
        if (dash == std::string::npos) return std::nullopt;
        const auto start = parse_hhmm(span.substr(0, dash));
        const auto end = parse_hhmm(span.substr(dash + 1));
        if (!start || !end || *end <= *start) return std::nullopt;
        plan.intentions.push_back({*start, *end, activity, category});
    }
    if (plan.intentions.empty()) return std::nullopt;
    for (size_t i = 1; i < plan.intentions.size(); ++i) {
        if (plan.intentions[i].start_min < plan.intentions[i - 1].end_min) return std::nullopt;
    }
    return plan;
}

DailyPlan template_plan(const StaticProfile& p, const std::string& date) {
    DailyPlan plan;
    plan.date = date;
    const bool works = p.occupation != "retiree" && p.occupation != "student" &&
                       p.occupation != "unemployed";
    if (works) {
        plan.intentions = {{8 * 60, 12 * 60, "work", "work"},
                           {12 * 60, 13 * 60, "lunch", "food"},
                           {13 * 60, 17 * 60, "work", "work"}};
    } else if (p.occupation == "student") {
        plan.intentions = {{9 * 60, 15 * 60, "classes", "education"},
                           {15 * 60, 16 * 60, "snack", "food"}};
    } else {
        plan.intentions = {{10 * 60, 12 * 60, "stroll", "leisure"},
                           {12 * 60 + 30, 13 * 60 + 30, "lunch", "food"}};
    }
    return plan;
}

void EprParams::validate() const {
    if (!(rho > 0.0 && rho <= 1.0)) throw Error("EPR rho must be in (0,1]");
    if (gamma < 0.0) throw Error("EPR gamma must be >= 0");
    if (tau <= 0.0) throw Error("EPR tau must be > 0");
    if (beta <= 0.0) throw Error("EPR beta must be > 0");
}

double epr_explore_probability(const EprParams& p, int64_t distinct_visited) {
    return std::min(1.0, p.rho * std::pow(static_cast<double>(distinct_visited), -p.gamma));
}

PoiId epr_step(AgentState& a, const City& city, Rng& rng, const EprParams& p) {
    if (a.visit_counts.empty() || a.distinct_visited < 1)
        throw Error("epr_step: agent has no visited location (home must seed the set)");

    const double p_explore = epr_explore_probability(p, a.distinct_visited);
    bool explore = rng.uniform01() < p_explore;

    PoiId chosen = -1;
    if (explore) {
        // uniform over POIs never visited; NoUnvisitedPOI forces the return branch
        const auto n_pois = static_cast<int64_t>(city.pois().size());
        if (a.distinct_visited >= n_pois) {
            explore = false;
        } else if (!p.distance_decay) {
            // draw an index among unvisited without materializing the set
            int64_t k = static_cast<int64_t>(rng.below(static_cast<uint64_t>(n_pois - a.distinct_visited)));
            for (PoiId id = 0; id < n_pois; ++id) {
                if (a.visit_counts.count(id)) continue;
                if (k-- == 0) {
                    chosen = id;
                    break;
                }
            }
        } else {
            const Point here = city.poi(a.location).pos;
            std::vector<PoiId> ids;
            std::vector<double> w;
            for (PoiId id = 0; id < n_pois; ++id) {
                if (a.visit_counts.count(id)) continue;
                const double d = distance_km(city.poi(id).pos, here);
                ids.push_back(id);
                w.push_back(1.0 / ((d + 0.1) * (d + 0.1)));
            }
            chosen = ids[rng.weighted_pick(w)];
        }
    }
    if (!explore) {
        // preferential return: proportional to visit counts
        int64_t total = 0;
        for (const auto& [id, c] : a.visit_counts) total += c;
        int64_t k = static_cast<int64_t>(rng.below(static_cast<uint64_t>(total)));
        for (const auto& [id, c] : a.visit_counts) {
            if (k < c) {
                chosen = id;
                break;
            }
            k -= c;
        }
    }

    auto [it, inserted] = a.visit_counts.try_emplace(chosen, 0);
    if (inserted) ++a.distinct_visited;
    ++it->second;
    a.location = chosen;
    return chosen;
}

EprWaitSampler::EprWaitSampler(const EprParams& p, int grid_points) {
    p.validate();
    const int n = std::max(grid_points, 16);
    grid_.resize(static_cast<size_t>(n));
    cdf_.resize(static_cast<size_t>(n));
    const double ratio = kMaxHours / kMinHours;
    for (int i = 0; i < n; ++i) {
        grid_[static_cast<size_t>(i)] =
            kMinHours * std::pow(ratio, static_cast<double>(i) / (n - 1));
    }
    auto pdf = [&](double t) { return std::pow(t, -1.0 - p.beta) * std::exp(-t / p.tau); };
    cdf_[0] = 0.0;
    for (int i = 1; i < n; ++i) {
        const double a = grid_[static_cast<size_t>(i - 1)], b = grid_[static_cast<size_t>(i)];
        cdf_[static_cast<size_t>(i)] =
            cdf_[static_cast<size_t>(i - 1)] + 0.5 * (pdf(a) + pdf(b)) * (b - a);
    }
    const double total = cdf_.back();
    for (double& v : cdf_) v /= total;
}

double EprWaitSampler::sample_hours(Rng& rng) const {
    const double u = rng.uniform01();
    const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
    if (it == cdf_.begin()) return grid_.front();
    if (it == cdf_.end()) return grid_.back();
    const size_t hi = static_cast<size_t>(it - cdf_.begin());
    const size_t lo = hi - 1;
    const double span = cdf_[hi] - cdf_[lo];
    const double frac = span > 0 ? (u - cdf_[lo]) / span : 0.0;
    return grid_[lo] + frac * (grid_[hi] - grid_[lo]);
}

}  // namespace opencity
