#pragma once

#include <stdexcept>
#include <string>

namespace vortex {

/// Base class for every failure raised by the library.
struct VortexError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// kernel
struct ZeroArgument : VortexError { using VortexError::VortexError; };
struct WidthTooLarge : VortexError { using VortexError::VortexError; };

// dynamics
struct CollisionError : VortexError {
    CollisionError(std::string msg, int a, int b, double when)
        : VortexError(std::move(msg)), first(a), second(b), time(when) {}
    int first;    // vortex index
    int second;   // vortex index, or -(k+1) for control k
    double time;
};
struct StepFailure : VortexError { using VortexError::VortexError; };

// curves
struct InfeasibleClearance : VortexError { using VortexError::VortexError; };
struct SpeedFloorUnachievable : VortexError { using VortexError::VortexError; };
struct BlockedPath : VortexError { using VortexError::VortexError; };
struct OverlappingObstacles : VortexError { using VortexError::VortexError; };
struct DiscontinuousJoin : VortexError { using VortexError::VortexError; };

// inversion
struct ZeroVelocity : VortexError { using VortexError::VortexError; };
struct Coincidence : VortexError { using VortexError::VortexError; };
struct DegenerateContext : VortexError { using VortexError::VortexError; };
struct ContractionViolated : VortexError { using VortexError::VortexError; };
struct NoConvergence : VortexError { using VortexError::VortexError; };
struct CalibrationFailed : VortexError { using VortexError::VortexError; };

// synthesis
struct DTooLarge : VortexError { using VortexError::VortexError; };
struct MembershipViolated : VortexError { using VortexError::VortexError; };
struct ContainmentViolated : VortexError { using VortexError::VortexError; };

// reduction
struct HypothesisHViolated : VortexError { using VortexError::VortexError; };
struct ShootingDiverged : VortexError { using VortexError::VortexError; };

// cli
struct ConfigError : VortexError { using VortexError::VortexError; };

}  // namespace vortex
