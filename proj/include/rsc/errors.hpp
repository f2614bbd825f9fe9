#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rsc {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
    using Error::Error;
};

struct ParameterError : Error {
    using Error::Error;
};

struct IndexError : Error {
    using Error::Error;
};

struct RangeError : Error {
    using Error::Error;
};

// Raised when a simulated state leaves the representable range. Carries the
// interval index so ensemble drivers can report where a sample died.
struct BlowupError : Error {
    std::size_t interval;
    explicit BlowupError(std::size_t k)
        : Error("non-finite state at interval " + std::to_string(k)), interval(k) {}
};

struct InversionError : Error {
    using Error::Error;
};

struct RiccatiSingularError : Error {
    double time;
    RiccatiSingularError(double t, double denom)
        : Error("Riccati denominator " + std::to_string(denom) + " at t=" + std::to_string(t)),
          time(t) {}
};

struct PositivityError : Error {
    using Error::Error;
};

struct EnsembleFailureError : Error {
    using Error::Error;
};

}  // namespace rsc
