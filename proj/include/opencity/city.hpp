#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "opencity/errors.hpp"
#include "opencity/types.hpp"

namespace opencity {

// Planar km coordinates. Lon/lat inputs are projected with a local
// equirectangular approximation at ingest time.
struct Point {
    double x = 0.0;
    double y = 0.0;
};

inline double distance_km(Point a, Point b) {
    const double dx = a.x - b.x, dy = a.y - b.y;
    return std::sqrt(dx * dx + dy * dy);
}

struct Poi {
    PoiId poi_id = 0;
    std::string name;
    std::string category;
    Point pos;
    BlockId block_id = 0;
};

struct Block {
    BlockId block_id = 0;
    int cell_x = 0;
    int cell_y = 0;
    std::array<double, 5> income_mix{};  // resident proportions per quintile, sums to 1
};

// Grid city: blocks are evenly spaced grid cells of grid_size km covering
// [0, width_cells*grid) x [0, height_cells*grid). Immutable after load; all
// queries are read-only.
class City {
public:
    City() = default;
    City(double grid_size_km, int width_cells, int height_cells,
         std::vector<Poi> pois, std::vector<Block> blocks);

    double grid_size() const { return grid_size_; }
    int width_cells() const { return width_; }
    int height_cells() const { return height_; }
    const std::vector<Poi>& pois() const { return pois_; }
    const std::vector<Block>& blocks() const { return blocks_; }
    const Poi& poi(PoiId id) const;
    const Block& block(BlockId id) const;
    bool has_poi(PoiId id) const;

    bool in_bounds(Point p) const;

    // Unique containing block. Grid rule: floor division; a location exactly
    // on a boundary belongs to the higher-index cell.
    BlockId block_of(Point p) const;

    // POIs within radius (inclusive), sorted by distance then poi_id,
    // optionally filtered by category. Backed by a grid-bucket index; results
    // match a brute-force scan.
    std::vector<const Poi*> nearby_pois(Point loc, double radius_km,
                                        const std::string& category_filter = "") const;

    static City load_json(const std::string& path);
    void save_json(const std::string& path) const;

private:
    void build_index();

    double grid_size_ = 1.0;
    int width_ = 0;
    int height_ = 0;
    std::vector<Poi> pois_;
    std::vector<Block> blocks_;
    // grid-bucket spatial index: bucket per block cell, poi indices sorted by id
    std::vector<std::vector<int>> buckets_;
};

struct TrajectoryPoint {
    SimTime t{0};
    PoiId poi = -1;
    BlockId block = 0;
    Point pos;
};

// a time-ordered trace of an agent's visited locations; times strictly increase
struct Trajectory {
    AgentId agent_id = 0;
    std::vector<TrajectoryPoint> points;
};

// Deterministic synthetic city. segregation_level 1 gives each block a
// one-hot resident income mix, 0 a uniform mix, intermediate a convex blend.
// n_blocks is rounded up to a full W x H rectangle so the grid partition
// covers the bounding box.
City gen_synthetic_city(int n_blocks, int pois_per_block, double segregation_level,
                        uint64_t seed);

extern const std::vector<std::string> kPoiCategories;

}  // namespace opencity
