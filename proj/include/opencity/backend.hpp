#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "opencity/choice_oracle.hpp"
#include "opencity/latency.hpp"
#include "opencity/types.hpp"

namespace opencity {

// What a backend produces for one request before the gateway applies its own
// connection accounting: body, token counts and the transfer+wait duration.
struct SimulatedReply {
    std::string text;
    int64_t input_tokens = 0;
    int64_t output_tokens = 0;
    Duration wait{0};
};

// Response producer behind the virtual gateway. Implementations must
// tolerate concurrent invocations.
class SimulatedBackend {
public:
    virtual ~SimulatedBackend() = default;
    virtual SimulatedReply simulate(const LlmRequest& req) = 0;
    virtual const LatencyModel& latency() const = 0;
};

// Deterministic offline stand-in for a chat-completion service. Parses the
// documented prompt schemas and answers from the persona-conditioned choice
// oracle, a grouping rule keyed on (occupation, education, income quintile),
// plan templates, and canned reflection/description text. Free-text prompts
// get an echo reply. Fully reproducible given (profiles, seed).
class MockBackend : public SimulatedBackend {
public:
    MockBackend(std::vector<StaticProfile> profiles, uint64_t seed,
                LatencyModel lm = LatencyModel{});

    SimulatedReply simulate(const LlmRequest& req) override;
    const LatencyModel& latency() const override { return lm_; }

    const ChoiceOracle& oracle() const { return oracle_; }
    const StaticProfile& profile(AgentId id) const;

    // Archetype key the mock groups by.
    static std::string archetype_key(const StaticProfile& p);

    // Test hook: non-empty return fails the request with that message.
    void set_fault(std::function<std::optional<std::string>(const LlmRequest&)> fn) {
        fault_ = std::move(fn);
    }

    // Shared with the engine-side fallback: plan line for an occupation.
    static std::string plan_text(const StaticProfile& p);

private:
    std::map<AgentId, StaticProfile> profiles_;
    uint64_t seed_;
    LatencyModel lm_;
    ChoiceOracle oracle_;
    std::function<std::optional<std::string>(const LlmRequest&)> fault_;
};

}  // namespace opencity
