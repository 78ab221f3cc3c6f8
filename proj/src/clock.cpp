#include "opencity/clock.hpp"

#include <cstdio>

namespace opencity {

// Day 0 of every simulation is 2024-06-03 (a Monday), rendered in UTC.
std::string sim_time_to_iso(SimTime t) {
    static constexpr int64_t kEpochSecs = 1717372800;  // 2024-06-03T00:00:00Z
    const int64_t total = kEpochSecs + t.count() / 1'000'000;
    // civil-from-days (Howard Hinnant's algorithm), enough for our fixed epoch
    int64_t days = total / 86400;
    int64_t secs = total % 86400;
    const int64_t z = days + 719468;
    const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const uint64_t doe = static_cast<uint64_t>(z - era * 146097);
    const uint64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int64_t y = static_cast<int64_t>(yoe) + era * 400;
    const uint64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const uint64_t mp = (5 * doy + 2) / 153;
    const uint64_t d = doy - (153 * mp + 2) / 5 + 1;
    const uint64_t m = mp < 10 ? mp + 3 : mp - 9;
    const int64_t year = y + (m <= 2);

    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04lld-%02llu-%02lluT%02lld:%02lld:%02lldZ",
                  static_cast<long long>(year), static_cast<unsigned long long>(m),
                  static_cast<unsigned long long>(d), static_cast<long long>(secs / 3600),
                  static_cast<long long>((secs / 60) % 60), static_cast<long long>(secs % 60));
    return buf;
}

}  // namespace opencity
