#pragma once

#include <stdexcept>
#include <string>

namespace otlq {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
    using Error::Error;
};

// A state/integrand left the representable floating-point range.
struct OverflowError : Error {
    explicit OverflowError(const std::string& what, double first_bad_time = 0.0)
        : Error(what), first_bad_time(first_bad_time) {}
    double first_bad_time;
};

// Tail integral does not converge: signal growth rate >= decay rate of the weight.
struct DivergentTailError : Error {
    using Error::Error;
};

// Tail integral requested for a signal with bounded domain (sampled grid).
struct UnsupportedTailError : Error {
    using Error::Error;
};

// Evaluation outside a sampled signal's grid.
struct OutOfRangeError : Error {
    using Error::Error;
};

// Hamiltonian has eigenvalues on the imaginary axis; no stabilizing Riccati solution.
struct DegenerateSpectrumError : Error {
    using Error::Error;
};

// A stabilizing feedback was required but the zero choice was requested on unstable dynamics.
struct StabilizerRequiredError : Error {
    using Error::Error;
};

// Fredholm contraction constant is >= 1.
struct ContractionViolatedError : Error {
    using Error::Error;
};

// Two redundant computation routes disagree beyond tolerance.
struct NumericalInconsistencyError : Error {
    using Error::Error;
};

// Operation invoked outside the regime where it is defined.
struct NotApplicableError : Error {
    using Error::Error;
};

}  // namespace otlq
