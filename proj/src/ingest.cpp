#include "opencity/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "opencity/errors.hpp"
#include "opencity/rng.hpp"

namespace opencity {

namespace {
// days-from-civil (Howard Hinnant)
int64_t days_from_civil(int y, unsigned m, unsigned d) {
    y -= m <= 2;
    const int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<int64_t>(doe) - 719468;
}
}  // namespace

std::optional<int64_t> parse_iso8601(const std::string& s) {
    int y, mo, d, h, mi, sec;
    int consumed = 0;
    if (std::sscanf(s.c_str(), "%d-%d-%dT%d:%d:%d%n", &y, &mo, &d, &h, &mi, &sec, &consumed) != 6)
        return std::nullopt;
    if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || sec > 60) return std::nullopt;
    int64_t t = days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d)) * 86400 +
                h * 3600 + mi * 60 + sec;
    const std::string rest = s.substr(static_cast<size_t>(consumed));
    if (rest.empty() || rest == "Z") return t;
    int oh, om;
    char sign;
    if (std::sscanf(rest.c_str(), "%c%2d:%2d", &sign, &oh, &om) == 3 && (sign == '+' || sign == '-')) {
        const int64_t off = oh * 3600 + om * 60;
        return sign == '+' ? t - off : t + off;
    }
    return std::nullopt;
}

std::string checkin_location_key(const RawCheckin& c) {
    if (c.poi_id) return "poi:" + std::to_string(*c.poi_id);
    char buf[48];
    std::snprintf(buf, sizeof(buf), "ll:%.4f,%.4f", c.lat, c.lon);
    return buf;
}

std::vector<RawCheckin> parse_checkins_csv(const std::string& path, IngestSummary& summary) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open check-ins file: " + path);
    std::vector<RawCheckin> out;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (first) {
            first = false;
            if (line.rfind("user_id,", 0) == 0) continue;  // header
        }
        if (line.empty()) continue;
        ++summary.rows_read;
        std::vector<std::string> cols;
        std::istringstream ls(line);
        std::string col;
        while (std::getline(ls, col, ',')) cols.push_back(col);
        if (cols.size() < 4) {
            ++summary.rows_unparseable;
            continue;
        }
        RawCheckin c;
        c.user_id = cols[0];
        const auto t = parse_iso8601(cols[1]);
        if (!t || c.user_id.empty()) {
            ++summary.rows_unparseable;
            continue;
        }
        c.epoch_secs = *t;
        try {
            c.lat = std::stod(cols[2]);
            c.lon = std::stod(cols[3]);
        } catch (const std::exception&) {
            ++summary.rows_unparseable;
            continue;
        }
        if (std::abs(c.lat) > 90.0 || std::abs(c.lon) > 180.0) {
            ++summary.rows_unparseable;
            continue;
        }
        if (cols.size() >= 5 && !cols[4].empty()) {
            try {
                c.poi_id = static_cast<PoiId>(std::stol(cols[4]));
            } catch (const std::exception&) {
                ++summary.rows_unparseable;
                continue;
            }
        }
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<DailyTrace> segment_and_filter(std::vector<RawCheckin> checkins,
                                           int utc_offset_hours, IngestSummary& summary) {
    std::stable_sort(checkins.begin(), checkins.end(), [](const RawCheckin& a, const RawCheckin& b) {
        if (a.user_id != b.user_id) return a.user_id < b.user_id;
        return a.epoch_secs < b.epoch_secs;
    });

    std::vector<DailyTrace> out;
    const int64_t offset = int64_t(utc_offset_hours) * 3600;
    size_t i = 0;
    while (i < checkins.size()) {
        const std::string& user = checkins[i].user_id;
        size_t j = i;
        while (j < checkins.size() && checkins[j].user_id == user) ++j;

        DailyTrace cur;
        cur.user_id = user;
        cur.local_day = INT64_MIN;
        auto flush = [&]() {
            if (cur.local_day == INT64_MIN) return;
            ++summary.days_total;
            if (cur.points.size() >= 4) {
                ++summary.days_kept;
                out.push_back(cur);
            }
            cur.points.clear();
        };
        int64_t last_t = INT64_MIN;
        for (size_t k = i; k < j; ++k) {
            const int64_t day = (checkins[k].epoch_secs + offset) / 86400;
            if (day != cur.local_day) {
                flush();
                cur.local_day = day;
                last_t = INT64_MIN;
            }
            if (checkins[k].epoch_secs == last_t) {
                ++summary.duplicate_timestamps;  // later duplicate dropped
                continue;
            }
            last_t = checkins[k].epoch_secs;
            cur.points.push_back(checkins[k]);
        }
        flush();
        i = j;
    }

    std::string last_user;
    for (const auto& d : out) {
        if (d.user_id != last_user) {
            ++summary.users_kept;
            last_user = d.user_id;
        }
    }
    return out;
}

std::string extract_home(const std::vector<DailyTrace>& user_days, int utc_offset_hours) {
    if (user_days.empty()) throw NoData("extract_home: no kept days");
    struct Tally {
        int64_t visits = 0;
        int64_t night_visits = 0;
    };
    std::map<std::string, Tally> tally;
    const int64_t offset = int64_t(utc_offset_hours) * 3600;
    for (const auto& day : user_days) {
        for (const auto& c : day.points) {
            auto& t = tally[checkin_location_key(c)];
            ++t.visits;
            const int64_t hour = ((c.epoch_secs + offset) % 86400) / 3600;
            if (hour >= 22 || hour < 6) ++t.night_visits;
        }
    }
    // map iteration is key-ordered, so the final tie already picks the lowest key
    std::string best;
    Tally best_t;
    for (const auto& [key, t] : tally) {
        if (t.visits > best_t.visits ||
            (t.visits == best_t.visits && t.night_visits > best_t.night_visits)) {
            best = key;
            best_t = t;
        }
    }
    return best;
}

void CensusMarginals::validate() const {
    auto check = [](double sum, const char* what) {
        if (std::abs(sum - 1.0) > 1e-6)
            throw InvalidMarginal(std::string(what) + " marginal sums to " + std::to_string(sum));
    };
    double s = 0;
    for (const auto& [band, p] : age_bands) {
        if (band.first > band.second) throw InvalidMarginal("age band reversed");
        s += p;
    }
    check(s, "age");
    s = 0;
    for (const auto& [g, p] : gender) s += p;
    check(s, "gender");
    s = 0;
    for (const auto& [o, p] : occupation) s += p;
    check(s, "occupation");
    s = 0;
    for (const auto& [e, p] : education) s += p;
    check(s, "education");
    s = 0;
    for (double p : income_quintiles) s += p;
    check(s, "income");
}

CensusMarginals CensusMarginals::defaults() {
    CensusMarginals c;
    c.age_bands = {{{18, 29}, 0.25}, {{30, 44}, 0.30}, {{45, 64}, 0.30}, {{65, 84}, 0.15}};
    c.gender = {{"female", 0.5}, {"male", 0.5}};
    c.occupation = {{"teacher", 0.1},  {"engineer", 0.13}, {"nurse", 0.1},   {"retail clerk", 0.12},
                    {"chef", 0.08},    {"driver", 0.09},   {"manager", 0.1}, {"artist", 0.05},
                    {"student", 0.11}, {"retiree", 0.12}};
    c.education = {{"high school", 0.35}, {"bachelor", 0.4}, {"master", 0.2}, {"doctorate", 0.05}};
    return c;
}

namespace {
template <typename T>
const T& pick_marginal(const std::vector<std::pair<T, double>>& dist, Rng& rng) {
    double u = rng.uniform01();
    for (const auto& [v, p] : dist) {
        u -= p;
        if (u < 0.0) return v;
    }
    return dist.back().first;
}
}  // namespace

std::vector<StaticProfile> sample_profiles(const CensusMarginals& census, int n, uint64_t seed) {
    if (n < 1) throw Error("sample_profiles: n must be >= 1");
    census.validate();
    Rng rng(hash_mix(seed, 0xCE25ull));
    std::vector<StaticProfile> out;
    out.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        StaticProfile p;
        p.agent_id = i;
        const auto band = pick_marginal(census.age_bands, rng);
        p.age = band.first + static_cast<int>(rng.below(static_cast<uint64_t>(band.second - band.first + 1)));
        p.gender = pick_marginal(census.gender, rng);
        p.occupation = pick_marginal(census.occupation, rng);
        p.education = pick_marginal(census.education, rng);
        double u = rng.uniform01();
        p.income_quintile = 5;
        for (int q = 0; q < 5; ++q) {
            u -= census.income_quintiles[static_cast<size_t>(q)];
            if (u < 0.0) {
                p.income_quintile = q + 1;
                break;
            }
        }
        p.home_block = 0;
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<StaticProfile> synthetic_archetype_population(int n, int n_archetypes, int n_blocks,
                                                          uint64_t seed) {
    if (n < 1 || n_archetypes < 1) throw Error("population parameters must be positive");
    struct Archetype {
        std::string occupation, education, gender_bias;
        int income_quintile;
        int age_lo, age_hi;
    };
    static const std::vector<std::string> occs = {"teacher", "engineer", "nurse",  "retail clerk",
                                                  "chef",    "driver",   "manager", "artist",
                                                  "student", "retiree",  "analyst", "technician"};
    static const std::vector<std::string> edus = {"high school", "bachelor", "master", "doctorate"};

    std::vector<Archetype> archetypes;
    Rng arng(hash_mix(seed, 0xA2C4ull));
    std::set<std::string> used;
    while (static_cast<int>(archetypes.size()) < n_archetypes) {
        Archetype a;
        a.occupation = occs[arng.below(occs.size())];
        a.education = edus[arng.below(edus.size())];
        // quintiles cycle so the population stays quintile-balanced, which is
        // what makes the segregation index's 1/5 reference meaningful
        a.income_quintile = 1 + static_cast<int>(archetypes.size()) % 5;
        const std::string key = a.occupation + "/" + a.education + "/" + std::to_string(a.income_quintile);
        if (!used.insert(key).second) continue;  // archetypes distinct in the grouping key
        a.gender_bias = arng.uniform01() < 0.5 ? "female" : "male";
        a.age_lo = 20 + static_cast<int>(arng.below(35));
        a.age_hi = a.age_lo + 12;
        archetypes.push_back(std::move(a));
    }

    Rng rng(hash_mix(seed, 0xF0F0ull));
    std::vector<StaticProfile> out;
    out.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const auto& a = archetypes[static_cast<size_t>(i) % archetypes.size()];
        StaticProfile p;
        p.agent_id = i;
        p.occupation = a.occupation;
        p.education = a.education;
        p.income_quintile = a.income_quintile;
        p.gender = rng.uniform01() < 0.8 ? a.gender_bias
                                         : (a.gender_bias == "female" ? "male" : "female");
        p.age = a.age_lo + static_cast<int>(rng.below(static_cast<uint64_t>(a.age_hi - a.age_lo + 1)));
        p.home_block = n_blocks > 0 ? static_cast<BlockId>(rng.below(static_cast<uint64_t>(n_blocks))) : 0;
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<StaticProfile> assign_homes_by_mix(std::vector<StaticProfile> profiles, const City& city,
                                               bool even_income, uint64_t seed) {
    Rng rng(hash_mix(seed, even_income ? 0xEE11ull : 0x0A11ull));
    const auto& blocks = city.blocks();
    if (!even_income) {
        // block drawn proportionally to its resident share of the agent's quintile
        for (auto& p : profiles) {
            std::vector<double> w(blocks.size());
            double total = 0.0;
            for (size_t b = 0; b < blocks.size(); ++b) {
                w[b] = blocks[b].income_mix[static_cast<size_t>(p.income_quintile - 1)];
                total += w[b];
            }
            if (total <= 0.0) {
                p.home_block = static_cast<BlockId>(rng.below(blocks.size()));
            } else {
                p.home_block = static_cast<BlockId>(rng.weighted_pick(w));
            }
        }
        return profiles;
    }
    // even: deal each quintile's agents across blocks round-robin
    std::array<std::vector<size_t>, 5> by_q;
    for (size_t i = 0; i < profiles.size(); ++i)
        by_q[static_cast<size_t>(profiles[i].income_quintile - 1)].push_back(i);
    for (auto& list : by_q) {
        // seeded shuffle so block order does not correlate with agent id
        for (size_t i = list.size(); i > 1; --i) {
            const size_t j = rng.below(i);
            std::swap(list[i - 1], list[j]);
        }
        size_t b = 0;
        for (size_t idx : list) {
            profiles[idx].home_block = static_cast<BlockId>(b % blocks.size());
            ++b;
        }
    }
    return profiles;
}

}  // namespace opencity
