#pragma once

// Test-side oracles, independent of the implementation paths they check.

#include <cmath>
#include <functional>
#include <queue>
#include <vector>

#include "opencity/agent.hpp"
#include "opencity/clock.hpp"

namespace opencity::test {

// ---------------------------------------------------------------------------
// Discrete-event oracle for the gateway pool model, for workloads where every
// request is submitted at t=0 with an identical wait duration. A connection
// is busy for (establish +) transmit and frees at transmit end; the wait
// overlaps. Sequential mode serializes requests end-to-end.
struct PoolOracleParams {
    int capacity = 8;
    bool reuse = true;
    bool sequential = false;
    double init_ms = 5.0;
    double connect_ms = 20.0;
    double wait_ms = 200.0;
};

inline double pool_oracle_makespan_ms(int n, const PoolOracleParams& p) {
    if (n <= 0) return 0.0;
    if (p.sequential) {
        if (p.reuse) return p.connect_ms + n * (p.init_ms + p.wait_ms);
        return n * (p.connect_ms + p.init_ms + p.wait_ms);
    }
    std::priority_queue<double, std::vector<double>, std::greater<>> slot_free;
    int created = 0;
    double makespan = 0.0;
    for (int k = 0; k < n; ++k) {
        double start = 0.0;
        double cost = 0.0;
        if (p.reuse) {
            if (created < p.capacity) {
                ++created;
                cost = p.connect_ms + p.init_ms;
            } else {
                start = slot_free.top();
                slot_free.pop();
                cost = p.init_ms;
            }
        } else {
            if (static_cast<int>(slot_free.size()) >= p.capacity) {
                start = slot_free.top();
                slot_free.pop();
            }
            cost = p.connect_ms + p.init_ms;
        }
        const double done = start + cost;
        slot_free.push(done);
        makespan = std::max(makespan, done + p.wait_ms);
    }
    return makespan;
}

// ---------------------------------------------------------------------------
// Composite-Simpson integration on a uniform grid.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n = 20001) {
    if (n % 2 == 0) ++n;
    const double h = (b - a) / (n - 1);
    double acc = f(a) + f(b);
    for (int i = 1; i < n - 1; ++i) acc += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return acc * h / 3.0;
}

// Numerically integrated moments of the truncated EPR waiting-time density
// P(dt) ~ dt^(-1-beta) exp(-dt/tau) on [0.25, 24] hours.
struct WaitDensityOracle {
    double beta;
    double tau;

    double pdf_unnorm(double t) const { return std::pow(t, -1.0 - beta) * std::exp(-t / tau); }
    double norm() const {
        return simpson([&](double t) { return pdf_unnorm(t); }, 0.25, 24.0);
    }
    double mean() const {
        return simpson([&](double t) { return t * pdf_unnorm(t); }, 0.25, 24.0) / norm();
    }
    double cdf(double x) const {
        return simpson([&](double t) { return pdf_unnorm(t); }, 0.25, x) / norm();
    }
    // expected ticks a sampled wait occupies after round-to-tick quantization
    double mean_ticks(int tick_minutes) const {
        auto ticks = [&](double t) {
            return std::max(1.0, std::floor(t * 60.0 / tick_minutes + 0.5));
        };
        return simpson([&](double t) { return ticks(t) * pdf_unnorm(t); }, 0.25, 24.0) / norm();
    }
};

// ---------------------------------------------------------------------------
// Exact DP over the EPR explore/return process: P(explore | S) = rho S^-gamma,
// S increments on explore. Returns expected explore count after n moves.
inline double expected_explores(int n_moves, const EprParams& p) {
    std::vector<double> prob_s(static_cast<size_t>(n_moves) + 2, 0.0);
    prob_s[1] = 1.0;  // home seeds the visited set
    double explores = 0.0;
    for (int m = 0; m < n_moves; ++m) {
        std::vector<double> next(prob_s.size(), 0.0);
        for (size_t s = 1; s < prob_s.size() - 1; ++s) {
            if (prob_s[s] == 0.0) continue;
            const double pe = epr_explore_probability(p, static_cast<int64_t>(s));
            explores += prob_s[s] * pe;
            next[s + 1] += prob_s[s] * pe;
            next[s] += prob_s[s] * (1.0 - pe);
        }
        prob_s.swap(next);
    }
    return explores;
}

// Mean-field estimate of the fraction of trajectory points that are
// segregated (home-block) visits under EPR with a fixed home: the start
// point plus returns that land on home, with returns splitting by visit
// counts. Explored venues are uniform city-wide, so their revisits count as
// mixed. Used with a tolerance band; the exact joint distribution is not
// tracked.
inline double expected_home_point_share(int n_moves, const EprParams& p) {
    double s = 1.0, home = 1.0, visits = 1.0, home_points = 1.0, points = 1.0;
    for (int m = 0; m < n_moves; ++m) {
        const double pe = std::min(1.0, p.rho * std::pow(s, -p.gamma));
        const double p_home_return = (1.0 - pe) * home / visits;
        home += p_home_return;
        home_points += p_home_return;
        points += 1.0;
        visits += 1.0;
        s += pe;
    }
    return home_points / points;
}

}  // namespace opencity::test
