#pragma once

#include <cctype>
#include <cstdint>
#include <string_view>

namespace opencity {

// Tokenizer stub: whitespace-delimited word count. Model-free and
// deterministic; reduction rates are ratios so the unit cancels.
inline int64_t count_tokens(std::string_view text) {
    int64_t n = 0;
    bool in_word = false;
    for (unsigned char c : text) {
        const bool space = std::isspace(c) != 0;
        if (!space && !in_word) ++n;
        in_word = !space;
    }
    return n;
}

}  // namespace opencity
