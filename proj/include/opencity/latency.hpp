#pragma once

#include <cstdint>

#include "opencity/clock.hpp"

namespace opencity {

// Phase-based latency model for the mock backend. The response wait is
// t_wait_base + t_per_token * (input + output tokens).
struct LatencyModel {
    Duration t_init = ms(5);
    Duration t_connect = ms(20);
    Duration t_teardown = ms(0);
    Duration t_wait_base = ms(200);
    Duration t_per_token = us(100);  // 0.1 ms/token

    Duration wait_for(int64_t input_tokens, int64_t output_tokens) const {
        return t_wait_base + Duration(t_per_token.count() * (input_tokens + output_tokens));
    }
};

}  // namespace opencity
