#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace opencity {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define OPENCITY_ERROR(Name)             \
    struct Name : Error {                \
        using Error::Error;              \
    }

// gateway
OPENCITY_ERROR(GatewayClosed);
OPENCITY_ERROR(WorkerPoolClosed);
OPENCITY_ERROR(HandleConsumed);

struct BackendError : Error {
    explicit BackendError(uint64_t request_id, const std::string& what)
        : Error("backend error for request " + std::to_string(request_id) + ": " + what),
          request_id(request_id) {}
    uint64_t request_id = 0;
};

// backends
OPENCITY_ERROR(MalformedPrompt);
OPENCITY_ERROR(EmptyCandidates);

// optimizer
OPENCITY_ERROR(UnparseableGrouping);
OPENCITY_ERROR(DistillInvalid);
OPENCITY_ERROR(AgentNotInGroup);
OPENCITY_ERROR(ArityMismatch);
OPENCITY_ERROR(ZeroBaseline);

// environment
OPENCITY_ERROR(OutOfBounds);
OPENCITY_ERROR(UnknownBlock);
OPENCITY_ERROR(CityFormatError);

// metrics
OPENCITY_ERROR(EmptyTrajectory);
OPENCITY_ERROR(ShapeMismatch);
OPENCITY_ERROR(NotNormalized);
OPENCITY_ERROR(EmptySelections);
OPENCITY_ERROR(LengthMismatch);

// ingest
OPENCITY_ERROR(NoData);
OPENCITY_ERROR(InvalidMarginal);

// experiments
OPENCITY_ERROR(ConfigMismatch);
OPENCITY_ERROR(UnknownAgent);
OPENCITY_ERROR(IoError);

#undef OPENCITY_ERROR

}  // namespace opencity
