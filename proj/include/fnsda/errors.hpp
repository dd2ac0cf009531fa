#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fnsda {

/// Incompatible tensor or field shapes.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Input outside the domain of a right-hand side (non-finite, wrong size).
struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// API misuse, e.g. backward on a non-scalar.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed or corrupted file.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A time integrator produced a non-finite state.
struct IntegrationError : std::runtime_error {
    IntegrationError(const std::string& what, double time)
        : std::runtime_error(what + " at t=" + std::to_string(time)), time(time) {}
    double time;
};

/// A loss evaluation diverged.
struct LossError : std::runtime_error {
    LossError(const std::string& what, std::size_t step)
        : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step(step) {}
    std::size_t step;
};

}  // namespace fnsda
