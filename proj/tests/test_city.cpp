#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "opencity/city.hpp"
#include "opencity/rng.hpp"

using namespace opencity;

TEST_CASE("block_of uses floor division with the boundary in the higher cell") {
    const City city = gen_synthetic_city(25, 2, 0.0, 1);
    REQUIRE(city.grid_size() == 1.0);
    CHECK(city.block_of({2.3, 4.7}) == city.block(4 * city.width_cells() + 2).block_id);
    // exactly on the x=2 boundary: belongs to the cell starting at 2
    CHECK(city.block_of({2.0, 0.5}) == city.block(2).block_id);
    CHECK_THROWS_AS(city.block_of({-0.1, 0.0}), OutOfBounds);
    CHECK_THROWS_AS(city.block_of({100.0, 0.0}), OutOfBounds);
}

TEST_CASE("nearby_pois equals a brute-force scan on 1000 random queries") {
    const City city = gen_synthetic_city(36, 6, 0.5, 9);
    Rng rng(123);
    for (int q = 0; q < 1000; ++q) {
        const Point loc{rng.uniform(0.0, 6.0), rng.uniform(0.0, 6.0)};
        const double radius = rng.uniform(0.0, 2.5);
        const auto got = city.nearby_pois(loc, radius);

        std::vector<const Poi*> want;
        for (const auto& p : city.pois()) {
            if (distance_km(p.pos, loc) <= radius) want.push_back(&p);
        }
        std::sort(want.begin(), want.end(), [&](const Poi* a, const Poi* b) {
            const double da = distance_km(a->pos, loc), db = distance_km(b->pos, loc);
            if (da != db) return da < db;
            return a->poi_id < b->poi_id;
        });
        REQUIRE(got.size() == want.size());
        for (size_t i = 0; i < got.size(); ++i) CHECK(got[i]->poi_id == want[i]->poi_id);
    }
}

TEST_CASE("radius zero returns only co-located POIs") {
    const City city = gen_synthetic_city(9, 3, 0.0, 2);
    const auto& poi = city.pois().front();
    const auto got = city.nearby_pois(poi.pos, 0.0);
    REQUIRE(!got.empty());
    for (const auto* p : got) CHECK(distance_km(p->pos, poi.pos) == 0.0);
}

TEST_CASE("category filter yields a subset of the unfiltered result") {
    const City city = gen_synthetic_city(16, 8, 0.0, 5);
    const Point loc{2.0, 2.0};
    const auto all = city.nearby_pois(loc, 2.0);
    const auto food = city.nearby_pois(loc, 2.0, "food");
    for (const auto* p : food) {
        CHECK(p->category == "food");
        CHECK(std::find_if(all.begin(), all.end(),
                           [&](const Poi* q) { return q->poi_id == p->poi_id; }) != all.end());
    }
}

TEST_CASE("synthetic city mixes: extremes and determinism") {
    const City uniform = gen_synthetic_city(12, 2, 0.0, 7);
    for (const auto& b : uniform.blocks()) {
        for (double v : b.income_mix) CHECK(v == doctest::Approx(0.2));
    }
    const City seg = gen_synthetic_city(12, 2, 1.0, 7);
    for (const auto& b : seg.blocks()) {
        int ones = 0, zeros = 0;
        for (double v : b.income_mix) {
            if (v == doctest::Approx(1.0)) ++ones;
            if (v == doctest::Approx(0.0)) ++zeros;
        }
        CHECK(ones == 1);
        CHECK(zeros == 4);
    }
    const City again = gen_synthetic_city(12, 2, 1.0, 7);
    REQUIRE(again.pois().size() == seg.pois().size());
    for (size_t i = 0; i < again.pois().size(); ++i) {
        CHECK(again.pois()[i].pos.x == seg.pois()[i].pos.x);
        CHECK(again.pois()[i].category == seg.pois()[i].category);
    }
}

TEST_CASE("block partition covers the bounding box with no overlaps") {
    const City city = gen_synthetic_city(10, 1, 0.0, 3);  // rounds up to 4x3
    CHECK(city.blocks().size() == static_cast<size_t>(city.width_cells() * city.height_cells()));
    Rng rng(5);
    for (int i = 0; i < 500; ++i) {
        const Point p{rng.uniform(0.0, city.width_cells() * 1.0),
                      rng.uniform(0.0, city.height_cells() * 1.0)};
        const BlockId b = city.block_of(p);  // exactly one containing block
        CHECK(b >= 0);
        CHECK(b < static_cast<BlockId>(city.blocks().size()));
    }
}

TEST_CASE("city json round-trip preserves content; loader reports violations") {
    const City city = gen_synthetic_city(9, 3, 0.7, 11);
    const std::string path = (std::filesystem::temp_directory_path() / "oc_city_test.json").string();
    city.save_json(path);
    const City loaded = City::load_json(path);
    REQUIRE(loaded.pois().size() == city.pois().size());
    CHECK(loaded.block(3).income_mix == city.block(3).income_mix);
    CHECK(loaded.poi(5).name == city.poi(5).name);

    // corrupt the income mix and expect a pointed failure
    std::string text;
    {
        std::ifstream in(path);
        std::ostringstream os;
        os << in.rdbuf();
        text = os.str();
    }
    const std::string needle = "\"income_mix\": [";
    const size_t at = text.find(needle);
    REQUIRE(at != std::string::npos);
    text.replace(at + needle.size(), 3, "9.0");
    const std::string bad_path =
        (std::filesystem::temp_directory_path() / "oc_city_bad.json").string();
    {
        std::ofstream out(bad_path);
        out << text;
    }
    CHECK_THROWS_AS(City::load_json(bad_path), CityFormatError);
}
