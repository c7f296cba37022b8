#pragma once

#include <stdexcept>
#include <string>

namespace toolflow {

// Root of all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad inputs: malformed specs, configs, incompatible checkpoints. CLI exit code 2.
struct ConfigError : Error {
    using Error::Error;
};

// Non-finite loss or gradient during training. CLI exit code 3.
struct NonFiniteLoss : Error {
    using Error::Error;
};

#define TOOLFLOW_DEFINE_ERROR(Name, Base)      \
    struct Name : Base {                       \
        using Base::Base;                      \
    };

// Graph / spec construction.
TOOLFLOW_DEFINE_ERROR(InvalidGraphSpec, ConfigError)
TOOLFLOW_DEFINE_ERROR(CycleDetected, InvalidGraphSpec)
TOOLFLOW_DEFINE_ERROR(UnknownTool, InvalidGraphSpec)
TOOLFLOW_DEFINE_ERROR(UnreachableContainer, InvalidGraphSpec)

// Checkpoints.
TOOLFLOW_DEFINE_ERROR(VersionMismatch, ConfigError)
TOOLFLOW_DEFINE_ERROR(GraphFingerprintMismatch, ConfigError)

// Suites.
TOOLFLOW_DEFINE_ERROR(EmptySuite, ConfigError)

// Runtime and training.
TOOLFLOW_DEFINE_ERROR(UnknownPosition, Error)
TOOLFLOW_DEFINE_ERROR(RoutingFieldMissing, Error)
TOOLFLOW_DEFINE_ERROR(ToolFailure, Error)
TOOLFLOW_DEFINE_ERROR(NonMonotonicStep, Error)
TOOLFLOW_DEFINE_ERROR(DimensionMismatch, Error)
TOOLFLOW_DEFINE_ERROR(ZeroProbabilityAction, Error)
TOOLFLOW_DEFINE_ERROR(IllegalExpertAction, Error)
TOOLFLOW_DEFINE_ERROR(PlanNotRealizable, Error)
TOOLFLOW_DEFINE_ERROR(SinkUnavailable, Error)

#undef TOOLFLOW_DEFINE_ERROR

}  // namespace toolflow
