#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <string>

namespace opencity {

// All simulation and latency bookkeeping runs on integer microseconds.
using Duration = std::chrono::microseconds;
using SimTime = Duration;  // offset from run start

constexpr Duration ms(int64_t v) { return std::chrono::milliseconds(v); }
constexpr Duration us(int64_t v) { return Duration(v); }
constexpr Duration minutes(int64_t v) { return std::chrono::minutes(v); }
constexpr Duration hours_to_duration(double h) {
    return Duration(static_cast<int64_t>(h * 3'600'000'000.0));
}
inline double to_seconds(Duration d) { return static_cast<double>(d.count()) / 1e6; }
inline double to_hours(Duration d) { return static_cast<double>(d.count()) / 3.6e9; }

// Injectable time source. The mock/virtual path advances time explicitly so
// timing assertions are bit-exact; the real path wraps steady_clock.
class Clock {
public:
    virtual ~Clock() = default;
    virtual SimTime now() const = 0;
    virtual bool is_virtual() const = 0;
};

class VirtualClock final : public Clock {
public:
    SimTime now() const override { return now_; }
    bool is_virtual() const override { return true; }

    // Monotone by contract; going backwards is a scheduler bug.
    void advance_to(SimTime t) {
        if (t > now_) now_ = t;
    }

private:
    SimTime now_{0};
};

class SteadyClock final : public Clock {
public:
    SteadyClock() : start_(std::chrono::steady_clock::now()) {}
    SimTime now() const override {
        return std::chrono::duration_cast<Duration>(std::chrono::steady_clock::now() - start_);
    }
    bool is_virtual() const override { return false; }

private:
    std::chrono::steady_clock::time_point start_;
};

// Simulation wall-calendar rendering: a fixed epoch keeps output reproducible.
// 2024-06-03 is day 0; times are rendered as ISO-8601 UTC.
std::string sim_time_to_iso(SimTime t);

}  // namespace opencity
