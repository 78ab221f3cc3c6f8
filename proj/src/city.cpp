#include "opencity/city.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "opencity/rng.hpp"

namespace opencity {

using nlohmann::json;

const std::vector<std::string> kPoiCategories = {
    "food", "work", "leisure", "shopping", "education", "health", "transport",
};

City::City(double grid_size_km, int width_cells, int height_cells, std::vector<Poi> pois,
           std::vector<Block> blocks)
    : grid_size_(grid_size_km),
      width_(width_cells),
      height_(height_cells),
      pois_(std::move(pois)),
      blocks_(std::move(blocks)) {
    if (grid_size_ <= 0 || width_ <= 0 || height_ <= 0)
        throw CityFormatError("city grid dimensions must be positive");
    if (static_cast<int>(blocks_.size()) != width_ * height_)
        throw CityFormatError("blocks must cover the full grid rectangle");
    for (size_t i = 0; i < blocks_.size(); ++i) {
        const auto& b = blocks_[i];
        if (b.block_id != static_cast<BlockId>(i))
            throw CityFormatError("blocks[" + std::to_string(i) + "].block_id: expected dense ids");
        if (b.cell_x != static_cast<int>(i) % width_ || b.cell_y != static_cast<int>(i) / width_)
            throw CityFormatError("blocks[" + std::to_string(i) + "].cell: must match row-major id");
        double sum = 0;
        for (double v : b.income_mix) sum += v;
        if (std::abs(sum - 1.0) > 1e-9)
            throw CityFormatError("blocks[" + std::to_string(i) +
                                  "].income_mix: proportions sum to " + std::to_string(sum));
    }
    for (size_t i = 0; i < pois_.size(); ++i) {
        const auto& p = pois_[i];
        if (p.poi_id != static_cast<PoiId>(i))
            throw CityFormatError("pois[" + std::to_string(i) + "].poi_id: expected dense ids");
        if (!in_bounds(p.pos))
            throw CityFormatError("pois[" + std::to_string(i) + "]: position out of bounds");
        if (p.block_id < 0 || p.block_id >= static_cast<BlockId>(blocks_.size()))
            throw CityFormatError("pois[" + std::to_string(i) + "].block_id: unknown block");
    }
    build_index();
}

const Poi& City::poi(PoiId id) const {
    if (!has_poi(id)) throw OutOfBounds("unknown poi " + std::to_string(id));
    return pois_[static_cast<size_t>(id)];
}

bool City::has_poi(PoiId id) const {
    return id >= 0 && id < static_cast<PoiId>(pois_.size());
}

const Block& City::block(BlockId id) const {
    if (id < 0 || id >= static_cast<BlockId>(blocks_.size()))
        throw UnknownBlock("unknown block " + std::to_string(id));
    return blocks_[static_cast<size_t>(id)];
}

bool City::in_bounds(Point p) const {
    return p.x >= 0 && p.y >= 0 && p.x <= width_ * grid_size_ && p.y <= height_ * grid_size_;
}

BlockId City::block_of(Point p) const {
    if (!in_bounds(p)) throw OutOfBounds("location out of city bounds");
    int cx = static_cast<int>(std::floor(p.x / grid_size_));
    int cy = static_cast<int>(std::floor(p.y / grid_size_));
    // the far edge of the bounding box folds into the last cell
    cx = std::min(cx, width_ - 1);
    cy = std::min(cy, height_ - 1);
    return static_cast<BlockId>(cy * width_ + cx);
}

void City::build_index() {
    buckets_.assign(static_cast<size_t>(width_) * height_, {});
    for (const auto& p : pois_) {
        int cx = std::min(static_cast<int>(std::floor(p.pos.x / grid_size_)), width_ - 1);
        int cy = std::min(static_cast<int>(std::floor(p.pos.y / grid_size_)), height_ - 1);
        buckets_[static_cast<size_t>(cy) * width_ + cx].push_back(p.poi_id);
    }
}

std::vector<const Poi*> City::nearby_pois(Point loc, double radius_km,
                                          const std::string& category_filter) const {
    if (!in_bounds(loc)) throw OutOfBounds("query location out of city bounds");
    const int reach = static_cast<int>(std::ceil(radius_km / grid_size_)) + 1;
    const int cx = std::min(static_cast<int>(std::floor(loc.x / grid_size_)), width_ - 1);
    const int cy = std::min(static_cast<int>(std::floor(loc.y / grid_size_)), height_ - 1);

    std::vector<const Poi*> out;
    for (int by = std::max(0, cy - reach); by <= std::min(height_ - 1, cy + reach); ++by) {
        for (int bx = std::max(0, cx - reach); bx <= std::min(width_ - 1, cx + reach); ++bx) {
            for (int idx : buckets_[static_cast<size_t>(by) * width_ + bx]) {
                const Poi& p = pois_[static_cast<size_t>(idx)];
                if (distance_km(p.pos, loc) > radius_km) continue;
                if (!category_filter.empty() && p.category != category_filter) continue;
                out.push_back(&p);
            }
        }
    }
    std::sort(out.begin(), out.end(), [&](const Poi* a, const Poi* b) {
        const double da = distance_km(a->pos, loc), db = distance_km(b->pos, loc);
        if (da != db) return da < db;
        return a->poi_id < b->poi_id;
    });
    return out;
}

City City::load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open city file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw CityFormatError(path + ": " + e.what());
    }
    try {
        std::vector<Block> blocks;
        for (const auto& jb : j.at("blocks")) {
            Block b;
            b.block_id = jb.at("block_id").get<BlockId>();
            b.cell_x = jb.at("cell").at(0).get<int>();
            b.cell_y = jb.at("cell").at(1).get<int>();
            const auto& mix = jb.at("income_mix");
            if (mix.size() != 5)
                throw CityFormatError("blocks[" + std::to_string(blocks.size()) +
                                      "].income_mix: expected 5 proportions");
            for (int q = 0; q < 5; ++q) b.income_mix[static_cast<size_t>(q)] = mix.at(q).get<double>();
            blocks.push_back(b);
        }
        std::vector<Poi> pois;
        for (const auto& jp : j.at("pois")) {
            Poi p;
            p.poi_id = jp.at("poi_id").get<PoiId>();
            p.name = jp.at("name").get<std::string>();
            p.category = jp.at("category").get<std::string>();
            p.pos.x = jp.at("x").get<double>();
            p.pos.y = jp.at("y").get<double>();
            p.block_id = jp.at("block_id").get<BlockId>();
            pois.push_back(p);
        }
        return City(j.at("grid_size").get<double>(), j.at("width_cells").get<int>(),
                    j.at("height_cells").get<int>(), std::move(pois), std::move(blocks));
    } catch (const json::exception& e) {
        throw CityFormatError(path + ": " + e.what());
    }
}

void City::save_json(const std::string& path) const {
    json j;
    j["grid_size"] = grid_size_;
    j["width_cells"] = width_;
    j["height_cells"] = height_;
    j["blocks"] = json::array();
    for (const auto& b : blocks_) {
        j["blocks"].push_back({{"block_id", b.block_id},
                               {"cell", {b.cell_x, b.cell_y}},
                               {"income_mix", b.income_mix}});
    }
    j["pois"] = json::array();
    for (const auto& p : pois_) {
        j["pois"].push_back({{"poi_id", p.poi_id},
                             {"name", p.name},
                             {"category", p.category},
                             {"x", p.pos.x},
                             {"y", p.pos.y},
                             {"block_id", p.block_id}});
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write city file: " + path);
    out << j.dump(2) << "\n";
}

City gen_synthetic_city(int n_blocks, int pois_per_block, double segregation_level,
                        uint64_t seed) {
    if (n_blocks <= 0 || pois_per_block <= 0)
        throw CityFormatError("gen_synthetic_city: parameters must be positive");
    segregation_level = std::clamp(segregation_level, 0.0, 1.0);

    const int w = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n_blocks))));
    const int h = (n_blocks + w - 1) / w;
    const double grid = 1.0;

    Rng rng(hash_mix(seed, 0xC17Full));
    std::vector<Block> blocks;
    std::vector<Poi> pois;
    for (int cy = 0; cy < h; ++cy) {
        for (int cx = 0; cx < w; ++cx) {
            Block b;
            b.block_id = static_cast<BlockId>(blocks.size());
            b.cell_x = cx;
            b.cell_y = cy;
            const int dominant = static_cast<int>(rng.below(5));
            for (int q = 0; q < 5; ++q) {
                const double onehot = (q == dominant) ? 1.0 : 0.0;
                b.income_mix[static_cast<size_t>(q)] =
                    segregation_level * onehot + (1.0 - segregation_level) * 0.2;
            }
            blocks.push_back(b);

            for (int k = 0; k < pois_per_block; ++k) {
                Poi p;
                p.poi_id = static_cast<PoiId>(pois.size());
                const auto& cat = kPoiCategories[rng.below(kPoiCategories.size())];
                p.category = cat;
                p.name = cat + "_" + std::to_string(p.poi_id);
                p.pos.x = (cx + rng.uniform(0.02, 0.98)) * grid;
                p.pos.y = (cy + rng.uniform(0.02, 0.98)) * grid;
                p.block_id = b.block_id;
                pois.push_back(p);
            }
        }
    }
    return City(grid, w, h, std::move(pois), std::move(blocks));
}

}  // namespace opencity
