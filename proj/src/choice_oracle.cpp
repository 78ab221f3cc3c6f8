#include "opencity/choice_oracle.hpp"

#include <algorithm>
#include <cmath>

#include "opencity/errors.hpp"
#include "opencity/rng.hpp"

namespace opencity {

namespace {
// Raw preference weight before normalization, in [0, 8]: wide enough that the
// softmax is peaked and personas have clear favourites.
double preference_weight(uint64_t seed, uint64_t profile_h, PoiId candidate) {
    const uint64_t h = hash_mix(hash_mix(seed, profile_h), static_cast<uint64_t>(candidate) + 0x51D);
    return 8.0 * static_cast<double>(h >> 11) * 0x1.0p-53;
}
}  // namespace

uint64_t ChoiceOracle::profile_hash(const StaticProfile& p) {
    uint64_t h = fnv1a64(p.gender);
    h = hash_mix(h, fnv1a64(p.occupation));
    h = hash_mix(h, fnv1a64(p.education));
    h = hash_mix(h, static_cast<uint64_t>(p.age));
    h = hash_mix(h, static_cast<uint64_t>(p.income_quintile));
    h = hash_mix(h, static_cast<uint64_t>(p.home_block) + 0xB10C);
    return h;
}

std::vector<double> ChoiceOracle::distribution(const StaticProfile& profile,
                                               const std::vector<PoiId>& candidates) const {
    if (candidates.empty()) throw EmptyCandidates("oracle_distribution: no candidates");
    const uint64_t ph = profile_hash(profile);
    std::vector<double> w(candidates.size());
    double max_w = -1.0;
    for (size_t i = 0; i < candidates.size(); ++i) {
        w[i] = preference_weight(seed_, ph, candidates[i]);
        max_w = std::max(max_w, w[i]);
    }
    double total = 0.0;
    for (double& v : w) {
        v = std::exp(v - max_w);  // softmax, temperature 1
        total += v;
    }
    for (double& v : w) v /= total;
    return w;
}

PoiId ChoiceOracle::choose(const StaticProfile& profile, const std::vector<PoiId>& candidates,
                           const std::string& dynamic_context) const {
    if (candidates.empty()) throw EmptyCandidates("choose: no candidates");
    const uint64_t ph = profile_hash(profile);
    const bool perturb = !dynamic_context.empty();
    const uint64_t ctx_h = perturb ? fnv1a64(dynamic_context) : 0;

    size_t best = 0;
    double best_score = -1e300;
    for (size_t i = 0; i < candidates.size(); ++i) {
        double score = preference_weight(seed_, ph, candidates[i]);
        if (perturb) {
            const uint64_t h =
                hash_mix(hash_mix(seed_, ctx_h), hash_mix(ph, static_cast<uint64_t>(candidates[i])));
            score += 3.0 * static_cast<double>(h >> 11) * 0x1.0p-53;
        }
        // tie on equal scores falls to the earlier candidate
        if (score > best_score) {
            best_score = score;
            best = i;
        }
    }
    return candidates[best];
}

}  // namespace opencity
