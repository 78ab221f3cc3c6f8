#pragma once

#include <string>
#include <vector>

#include "opencity/types.hpp"

namespace opencity {

// Persona-conditioned ground truth for location choices. Weights come from a
// fixed hash of the profile fields and the candidate id, softmax-normalized,
// so different profiles prefer different candidates while everything stays
// reproducible. Permutation-invariant: each candidate's mass depends only on
// its identity.
class ChoiceOracle {
public:
    explicit ChoiceOracle(uint64_t seed) : seed_(seed) {}

    uint64_t seed() const { return seed_; }

    // Normalized preference distribution over candidates, in candidate order.
    std::vector<double> distribution(const StaticProfile& profile,
                                     const std::vector<PoiId>& candidates) const;

    // Deterministic choice for one decision. Empty dynamic context picks the
    // distribution's argmax; non-empty context perturbs log-preferences by a
    // hashed offset so agents with different memories can diverge.
    PoiId choose(const StaticProfile& profile, const std::vector<PoiId>& candidates,
                 const std::string& dynamic_context) const;

    static uint64_t profile_hash(const StaticProfile& profile);

private:
    uint64_t seed_;
};

}  // namespace opencity
