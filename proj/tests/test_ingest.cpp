#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "opencity/ingest.hpp"

using namespace opencity;

namespace {
std::string write_temp(const std::string& name, const std::string& content) {
    const auto path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream out(path);
    out << content;
    return path;
}

RawCheckin at(const std::string& user, const std::string& iso, double lat = 40.0,
              double lon = -74.0) {
    RawCheckin c;
    c.user_id = user;
    c.epoch_secs = *parse_iso8601(iso);
    c.lat = lat;
    c.lon = lon;
    return c;
}
}  // namespace

TEST_CASE("iso-8601 parsing with optional zone") {
    CHECK(parse_iso8601("2024-06-03T00:00:00Z").value() == 1717372800);
    CHECK(parse_iso8601("2024-06-03T00:00:00").value() == 1717372800);
    CHECK(parse_iso8601("2024-06-03T02:00:00+02:00").value() == 1717372800);
    CHECK(!parse_iso8601("not a time").has_value());
    CHECK(!parse_iso8601("2024-13-40T00:00:00").has_value());
}

TEST_CASE("csv parsing skips bad rows and counts them") {
    const std::string csv =
        "user_id,timestamp,lat,lon,poi_id\n"
        "u1,2023-05-01T08:00:00Z,40.7,-74.0,12\n"
        "u1,not-a-time,40.7,-74.0,\n"
        "u1,2023-05-01T09:00:00Z,200.0,-74.0,\n"
        "u2,2023-05-01T09:30:00Z,40.8,-74.1\n";
    IngestSummary summary;
    const auto rows = parse_checkins_csv(write_temp("oc_checkins.csv", csv), summary);
    CHECK(summary.rows_read == 4);
    CHECK(summary.rows_unparseable == 2);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].poi_id.value() == 12);
    CHECK(!rows[1].poi_id.has_value());
}

TEST_CASE("segment and filter: the 4-point day rule at the boundary") {
    std::vector<RawCheckin> checkins;
    // day one: 3 points -> dropped
    for (int i = 0; i < 3; ++i)
        checkins.push_back(at("u1", "2023-05-01T0" + std::to_string(2 + i) + ":00:00Z"));
    // day two: 4 points -> kept
    for (int i = 0; i < 4; ++i)
        checkins.push_back(at("u1", "2023-05-02T0" + std::to_string(2 + i) + ":00:00Z"));
    IngestSummary summary;
    const auto days = segment_and_filter(checkins, 0, summary);
    REQUIRE(days.size() == 1);
    CHECK(days[0].points.size() == 4);
    CHECK(summary.days_total == 2);
    CHECK(summary.days_kept == 1);
}

TEST_CASE("duplicate timestamps drop the later point, logged") {
    std::vector<RawCheckin> checkins;
    checkins.push_back(at("u1", "2023-05-01T08:00:00Z", 40.0));
    checkins.push_back(at("u1", "2023-05-01T08:00:00Z", 41.0));  // duplicate, dropped
    for (int i = 0; i < 3; ++i)
        checkins.push_back(at("u1", "2023-05-01T0" + std::to_string(9) + ":0" + std::to_string(i) + ":00Z"));
    IngestSummary summary;
    const auto days = segment_and_filter(checkins, 0, summary);
    CHECK(summary.duplicate_timestamps == 1);
    REQUIRE(days.size() == 1);
    CHECK(days[0].points.size() == 4);
    CHECK(days[0].points[0].lat == doctest::Approx(40.0));  // the first one stays
}

TEST_CASE("filtering is idempotent") {
    std::vector<RawCheckin> checkins;
    for (int d = 1; d <= 3; ++d) {
        for (int i = 0; i < 3 + d; ++i) {
            checkins.push_back(at("u1", "2023-05-0" + std::to_string(d) + "T0" +
                                            std::to_string(2 + i) + ":00:00Z"));
        }
    }
    IngestSummary s1;
    const auto once = segment_and_filter(checkins, 0, s1);
    std::vector<RawCheckin> flattened;
    for (const auto& d : once) {
        flattened.insert(flattened.end(), d.points.begin(), d.points.end());
    }
    IngestSummary s2;
    const auto twice = segment_and_filter(flattened, 0, s2);
    REQUIRE(once.size() == twice.size());
    for (size_t i = 0; i < once.size(); ++i) CHECK(once[i].points.size() == twice[i].points.size());
}

TEST_CASE("home extraction: counts, night tie-break, lowest key") {
    DailyTrace day;
    day.user_id = "u1";
    auto add = [&](const std::string& iso, PoiId poi) {
        RawCheckin c = at("u1", iso);
        c.poi_id = poi;
        day.points.push_back(c);
    };
    SUBCASE("plain majority") {
        add("2023-05-01T08:00:00Z", 5);
        add("2023-05-01T09:00:00Z", 5);
        add("2023-05-01T10:00:00Z", 5);
        add("2023-05-01T11:00:00Z", 9);
        CHECK(extract_home({day}, 0) == "poi:5");
    }
    SUBCASE("tie resolved by night visits") {
        add("2023-05-01T10:00:00Z", 5);
        add("2023-05-01T11:00:00Z", 5);
        add("2023-05-01T23:00:00Z", 9);  // night
        add("2023-05-01T12:00:00Z", 9);
        CHECK(extract_home({day}, 0) == "poi:9");
    }
    SUBCASE("full tie falls to the lowest key") {
        add("2023-05-01T10:00:00Z", 9);
        add("2023-05-01T11:00:00Z", 5);
        CHECK(extract_home({day}, 0) == "poi:5");
    }
    SUBCASE("no data") { CHECK_THROWS_AS(extract_home({}, 0), NoData); }
}

TEST_CASE("home extraction is invariant to input day order") {
    DailyTrace d1, d2;
    d1.user_id = d2.user_id = "u";
    for (int i = 0; i < 4; ++i) {
        RawCheckin c = at("u", "2023-05-01T0" + std::to_string(2 + i) + ":00:00Z");
        c.poi_id = i % 2;
        d1.points.push_back(c);
    }
    for (int i = 0; i < 4; ++i) {
        RawCheckin c = at("u", "2023-05-02T0" + std::to_string(2 + i) + ":00:00Z");
        c.poi_id = 0;
        d2.points.push_back(c);
    }
    CHECK(extract_home({d1, d2}, 0) == extract_home({d2, d1}, 0));
}

TEST_CASE("census sampling: marginals concentrate within 2% at n = 10000") {
    const CensusMarginals census = CensusMarginals::defaults();
    const auto profiles = sample_profiles(census, 10000, 99);
    REQUIRE(profiles.size() == 10000);

    std::array<int, 5> quintiles{};
    std::map<std::string, int> occupations;
    for (const auto& p : profiles) {
        REQUIRE(p.income_quintile >= 1);
        REQUIRE(p.income_quintile <= 5);
        quintiles[static_cast<size_t>(p.income_quintile - 1)] += 1;
        occupations[p.occupation] += 1;
    }
    for (int q = 0; q < 5; ++q)
        CHECK(std::abs(quintiles[static_cast<size_t>(q)] / 10000.0 - 0.2) < 0.02);
    for (const auto& [occ, share] : census.occupation)
        CHECK(std::abs(occupations[occ] / 10000.0 - share) < 0.02);

    // deterministic per seed
    const auto again = sample_profiles(census, 100, 7);
    const auto again2 = sample_profiles(census, 100, 7);
    for (size_t i = 0; i < 100; ++i) {
        CHECK(again[i].occupation == again2[i].occupation);
        CHECK(again[i].age == again2[i].age);
    }
}

TEST_CASE("n = 1 yields one valid profile; broken marginals are rejected") {
    const auto one = sample_profiles(CensusMarginals::defaults(), 1, 4);
    REQUIRE(one.size() == 1);
    CHECK(one[0].valid());

    CensusMarginals bad = CensusMarginals::defaults();
    bad.income_quintiles = {0.2, 0.2, 0.2, 0.2, 0.1};  // sums to 0.9
    CHECK_THROWS_AS(sample_profiles(bad, 10, 1), InvalidMarginal);
}

TEST_CASE("synthetic archetype population: distinct grouping keys, homes in range") {
    const auto pop = synthetic_archetype_population(200, 20, 25, 3);
    std::set<std::string> keys;
    for (const auto& p : pop) {
        keys.insert(p.occupation + "/" + p.education + "/" + std::to_string(p.income_quintile));
        CHECK(p.home_block >= 0);
        CHECK(p.home_block < 25);
    }
    CHECK(keys.size() == 20);
}

TEST_CASE("home assignment follows block mixes; even mode balances quintiles per block") {
    const City seg_city = gen_synthetic_city(25, 2, 1.0, 5);
    auto pop = synthetic_archetype_population(2000, 10, 25, 5);

    const auto mix = assign_homes_by_mix(pop, seg_city, false, 5);
    for (const auto& p : mix) {
        // at segregation 1, an agent lands only on blocks dominated by its quintile
        CHECK(seg_city.block(p.home_block).income_mix[static_cast<size_t>(p.income_quintile - 1)] ==
              doctest::Approx(1.0));
    }

    const auto even = assign_homes_by_mix(pop, seg_city, true, 5);
    std::map<BlockId, std::array<int, 5>> per_block;
    for (const auto& p : even) per_block[p.home_block][static_cast<size_t>(p.income_quintile - 1)] += 1;
    for (const auto& [b, counts] : per_block) {
        int lo = 1 << 30, hi = 0;
        for (int c : counts) {
            lo = std::min(lo, c);
            hi = std::max(hi, c);
        }
        CHECK(hi - lo <= 2);  // near-uniform quintile mix per block
    }
}
