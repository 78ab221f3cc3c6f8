#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "opencity/city.hpp"
#include "opencity/types.hpp"

namespace opencity {

struct RawCheckin {
    std::string user_id;
    int64_t epoch_secs = 0;  // UTC
    double lat = 0.0;
    double lon = 0.0;
    std::optional<PoiId> poi_id;
};

// "location key" of a check-in: the poi id when present, else coordinates
// rounded to ~10 m.
std::string checkin_location_key(const RawCheckin& c);

struct IngestSummary {
    int64_t rows_read = 0;
    int64_t rows_unparseable = 0;
    int64_t duplicate_timestamps = 0;
    int64_t days_total = 0;
    int64_t days_kept = 0;
    int64_t users_kept = 0;
};

struct DailyTrace {
    std::string user_id;
    int64_t local_day = 0;  // days since epoch, in city-local time
    std::vector<RawCheckin> points;  // strictly time-ordered
};

// CSV rows: user_id,timestamp,lat,lon[,poi_id] with an ISO-8601 timestamp.
// Unparseable rows are skipped and counted.
std::vector<RawCheckin> parse_checkins_csv(const std::string& path, IngestSummary& summary);

std::optional<int64_t> parse_iso8601(const std::string& s);

// Groups check-ins per user per local calendar day, drops days with fewer
// than 4 points, drops the later of two points sharing a timestamp. Output
// ordered by (user_id, day).
std::vector<DailyTrace> segment_and_filter(std::vector<RawCheckin> checkins,
                                           int utc_offset_hours, IngestSummary& summary);

// Most frequently visited location over the kept days; ties prefer more
// 22:00-06:00 visits, then the lowest location key.
std::string extract_home(const std::vector<DailyTrace>& user_days, int utc_offset_hours);

struct CensusMarginals {
    // each distribution sums to 1 (tolerance 1e-6)
    std::vector<std::pair<std::pair<int, int>, double>> age_bands;  // [lo, hi] inclusive
    std::vector<std::pair<std::string, double>> gender;
    std::vector<std::pair<std::string, double>> occupation;
    std::vector<std::pair<std::string, double>> education;
    std::array<double, 5> income_quintiles{0.2, 0.2, 0.2, 0.2, 0.2};

    void validate() const;
    static CensusMarginals defaults();
};

// Independent draws per marginal; home_block left 0 (assigned when a
// population is bound to a city).
std::vector<StaticProfile> sample_profiles(const CensusMarginals& census, int n, uint64_t seed);

// Synthetic population drawn from k archetypes. Archetypes are distinct in
// (occupation, education, income quintile); members vary in age, gender and
// home block.
std::vector<StaticProfile> synthetic_archetype_population(int n, int n_archetypes,
                                                          int n_blocks, uint64_t seed);

// Homes drawn per block resident income mix; returns profiles with
// home_block set. even_income redistributes so every block's agent income
// mix is uniform.
std::vector<StaticProfile> assign_homes_by_mix(std::vector<StaticProfile> profiles,
                                               const City& city, bool even_income,
                                               uint64_t seed);

}  // namespace opencity
