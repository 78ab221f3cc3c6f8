#pragma once

#include <map>
#include <string>
#include <vector>

#include "opencity/city.hpp"
#include "opencity/types.hpp"

namespace opencity {

namespace metrics {

// Block-to-block transition counts with self-transitions excluded;
// `normalized` sums to 1 when any transition exists, else stays all-zero.
struct ODMatrix {
    int n_blocks = 0;
    std::vector<int64_t> counts;     // row-major n x n
    std::vector<double> normalized;  // same shape
    int64_t total = 0;

    int64_t& at(BlockId from, BlockId to) {
        return counts[static_cast<size_t>(from) * n_blocks + to];
    }
    double norm_at(BlockId from, BlockId to) const {
        return normalized[static_cast<size_t>(from) * n_blocks + to];
    }
};

// Per-block visit tallies by visitor income quintile.
struct SegregationTable {
    // block -> visit counts per quintile (index 0 = quintile 1)
    std::map<BlockId, std::array<int64_t, 5>> visits;

    void add_visit(BlockId block, int income_quintile) {
        visits[block][static_cast<size_t>(income_quintile - 1)] += 1;
    }
};

// r_g: RMS distance of a trajectory's points from its center of mass (km).
double radius_of_gyration(const Trajectory& traj);

ODMatrix od_matrix(const std::vector<Trajectory>& trajs, const City& city);

double od_mse(const ODMatrix& a, const ODMatrix& b);

// S_alpha = (5/8) * sum_q |tau_q - 1/5| for each visited block.
std::map<BlockId, double> segregation_index(const SegregationTable& table);

// Jensen-Shannon divergence, log base 2, in [0,1]. Inputs must be normalized
// within 1e-9 and share support (same length).
double jsd(const std::vector<double>& p, const std::vector<double>& q);

// Fraction of repetitions selecting the reference distribution's mode
// (ties broken toward the lowest candidate index).
double top1_hit_rate(const std::vector<int>& selections, const std::vector<double>& reference);

// Plain MSE over paired values (R_MSE / S_MSE).
double mse(const std::vector<double>& real, const std::vector<double>& sim);

struct MetricsReport {
    double r_mse = 0.0;
    double od_mse = 0.0;
    double s_mse = 0.0;
    double jsd_mean = 0.0;
    double jsd_std = 0.0;
    double t1 = 0.0;
    double rr = 0.0;
    double tr = 0.0;
    double speedup = 0.0;
    std::vector<double> per_block_segregation;

    std::string to_json() const;
    static MetricsReport from_json(const std::string& text);
};

}  // namespace metrics
}  // namespace opencity
