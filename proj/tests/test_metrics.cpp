#include <doctest.h>

#include <cmath>

#include "opencity/metrics.hpp"
#include "opencity/rng.hpp"

using namespace opencity;
using namespace opencity::metrics;

namespace {
Trajectory traj_at(std::initializer_list<Point> pts) {
    Trajectory t;
    t.agent_id = 0;
    int64_t i = 0;
    for (const Point& p : pts) {
        t.points.push_back({minutes(++i), 0, 0, p});
    }
    return t;
}
}  // namespace

TEST_CASE("radius of gyration: frozen cases") {
    CHECK(radius_of_gyration(traj_at({{3.0, 4.0}})) == doctest::Approx(0.0).epsilon(1e-12));
    // two points 2 km apart: symmetry forces the midpoint center -> r_g = 1
    CHECK(radius_of_gyration(traj_at({{0.0, 0.0}, {2.0, 0.0}})) ==
          doctest::Approx(1.0).epsilon(1e-12));
    // unit-square corners: every point is sqrt(0.5) from the center
    const double rg = radius_of_gyration(traj_at({{0, 0}, {1, 0}, {1, 1}, {0, 1}}));
    CHECK(std::abs(rg - std::sqrt(0.5)) <= 1e-12);
    CHECK_THROWS_AS(radius_of_gyration(Trajectory{}), EmptyTrajectory);
}

TEST_CASE("radius of gyration is translation invariant") {
    Rng rng(3);
    for (int rep = 0; rep < 50; ++rep) {
        Trajectory a;
        a.agent_id = 0;
        const double dx = rng.uniform(-50, 50), dy = rng.uniform(-50, 50);
        Trajectory b = a;
        for (int i = 0; i < 20; ++i) {
            const Point p{rng.uniform(0, 10), rng.uniform(0, 10)};
            a.points.push_back({minutes(i + 1), 0, 0, p});
            b.points.push_back({minutes(i + 1), 0, 0, {p.x + dx, p.y + dy}});
        }
        CHECK(radius_of_gyration(a) == doctest::Approx(radius_of_gyration(b)).epsilon(1e-9));
    }
}

TEST_CASE("od matrix counts transitions between blocks, excluding self-loops") {
    const City city = gen_synthetic_city(4, 1, 0.0, 1);
    Trajectory t;
    t.agent_id = 0;
    t.points = {{minutes(1), 0, 0, {}}, {minutes(2), 1, 1, {}}};
    const auto od = od_matrix({t}, city);
    CHECK(od.total == 1);
    CHECK(od.norm_at(0, 1) == doctest::Approx(1.0));

    Trajectory still;
    still.agent_id = 1;
    still.points = {{minutes(1), 0, 2, {}}, {minutes(2), 0, 2, {}}, {minutes(3), 0, 2, {}}};
    const auto od2 = od_matrix({still}, city);
    CHECK(od2.total == 0);
    for (double v : od2.normalized) CHECK(v == 0.0);  // zero total -> all-zero normalized

    CHECK(od_mse(od, od) == doctest::Approx(0.0));
}

TEST_CASE("od_mse: disjoint unit masses on a 2x2 block set") {
    ODMatrix a, b;
    a.n_blocks = b.n_blocks = 2;
    a.counts.assign(4, 0);
    b.counts.assign(4, 0);
    a.normalized = {0.0, 1.0, 0.0, 0.0};  // mass at (0,1)
    b.normalized = {0.0, 0.0, 1.0, 0.0};  // mass at (1,0)
    CHECK(od_mse(a, b) == doctest::Approx(0.5).epsilon(1e-12));
    ODMatrix c;
    c.n_blocks = 3;
    c.normalized.assign(9, 0.0);
    CHECK_THROWS_AS(od_mse(a, c), ShapeMismatch);
}

TEST_CASE("od matrix is invariant under agent permutation") {
    const City city = gen_synthetic_city(9, 2, 0.0, 2);
    Rng rng(17);
    std::vector<Trajectory> trajs;
    for (int a = 0; a < 8; ++a) {
        Trajectory t;
        t.agent_id = a;
        for (int i = 0; i < 12; ++i) {
            const PoiId poi = static_cast<PoiId>(rng.below(city.pois().size()));
            t.points.push_back({minutes(i + 1), poi, city.poi(poi).block_id, city.poi(poi).pos});
        }
        trajs.push_back(std::move(t));
    }
    auto shuffled = trajs;
    std::reverse(shuffled.begin(), shuffled.end());
    CHECK(od_mse(od_matrix(trajs, city), od_matrix(shuffled, city)) == doctest::Approx(0.0));
}

TEST_CASE("segregation index: frozen cases and bounds") {
    SegregationTable t;
    for (int q = 1; q <= 5; ++q) {
        for (int i = 0; i < 2; ++i) t.add_visit(0, q);  // uniform -> 0
    }
    for (int i = 0; i < 10; ++i) t.add_visit(1, 3);  // single quintile -> 1
    // (0.4, 0.3, 0.1, 0.1, 0.1) -> 0.375
    for (int i = 0; i < 4; ++i) t.add_visit(2, 1);
    for (int i = 0; i < 3; ++i) t.add_visit(2, 2);
    t.add_visit(2, 3);
    t.add_visit(2, 4);
    t.add_visit(2, 5);

    const auto s = segregation_index(t);
    CHECK(std::abs(s.at(0) - 0.0) <= 1e-12);
    CHECK(std::abs(s.at(1) - 1.0) <= 1e-12);
    CHECK(std::abs(s.at(2) - 0.375) <= 1e-12);

    Rng rng(23);
    SegregationTable random_table;
    for (int b = 0; b < 40; ++b) {
        const int visits = 1 + static_cast<int>(rng.below(30));
        for (int i = 0; i < visits; ++i)
            random_table.add_visit(b, 1 + static_cast<int>(rng.below(5)));
    }
    for (const auto& [b, v] : segregation_index(random_table)) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("jsd: frozen cases, symmetry, normalization guard") {
    CHECK(jsd({0.3, 0.7}, {0.3, 0.7}) == doctest::Approx(0.0));
    CHECK(jsd({1.0, 0.0}, {0.0, 1.0}) == doctest::Approx(1.0));  // disjoint, base 2
    CHECK(std::abs(jsd({0.5, 0.5}, {1.0, 0.0}) - 0.3113) <= 1e-4);
    CHECK_THROWS_AS(jsd({0.5, 0.6}, {0.5, 0.5}), NotNormalized);
    CHECK_THROWS_AS(jsd({0.5, 0.5}, {1.0}), ShapeMismatch);

    Rng rng(31);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<double> p(6), q(6);
        double sp = 0, sq = 0;
        for (int i = 0; i < 6; ++i) {
            p[i] = rng.uniform01();
            q[i] = rng.uniform01();
            sp += p[i];
            sq += q[i];
        }
        for (int i = 0; i < 6; ++i) {
            p[i] /= sp;
            q[i] /= sq;
        }
        const double ab = jsd(p, q), ba = jsd(q, p);
        CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
        CHECK(ab >= 0.0);
        CHECK(ab <= 1.0 + 1e-12);
    }
}

TEST_CASE("top-1 hit rate against the reference mode") {
    const std::vector<double> ref{0.1, 0.6, 0.3};
    CHECK(top1_hit_rate({1, 1, 1, 1}, ref) == doctest::Approx(1.0));
    CHECK(top1_hit_rate({0, 2, 0, 2}, ref) == doctest::Approx(0.0));
    CHECK(top1_hit_rate({1, 0, 1, 2}, ref) == doctest::Approx(0.5));
    // tie in the reference -> lowest candidate index is the mode
    CHECK(top1_hit_rate({0, 1}, {0.5, 0.5}) == doctest::Approx(0.5));
    CHECK_THROWS_AS(top1_hit_rate({}, ref), EmptySelections);
}

TEST_CASE("mse over paired values") {
    CHECK(mse({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}) == doctest::Approx(0.0));
    CHECK(mse({1.0, 2.0}, {2.0, 4.0}) == doctest::Approx(2.5));
    CHECK_THROWS_AS(mse({1.0}, {1.0, 2.0}), LengthMismatch);
}

TEST_CASE("metrics report json round-trip") {
    MetricsReport r;
    r.r_mse = 19.5;
    r.od_mse = 3.88e-4;
    r.s_mse = 0.0312;
    r.jsd_mean = 0.06;
    r.jsd_std = 0.04;
    r.t1 = 0.86;
    r.rr = 0.737;
    r.tr = 0.455;
    r.speedup = 635.3;
    r.per_block_segregation = {0.1, 0.9};
    const MetricsReport back = MetricsReport::from_json(r.to_json());
    CHECK(back.od_mse == doctest::Approx(r.od_mse));
    CHECK(back.rr == doctest::Approx(r.rr));
    CHECK(back.per_block_segregation.size() == 2);
}
