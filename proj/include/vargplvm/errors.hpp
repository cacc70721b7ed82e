#pragma once

#include <stdexcept>
#include <string>

namespace vargplvm {

// Bad argument: wrong shapes, unknown names, out-of-range options.
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// An object is in a state that violates its invariants (e.g. a non-positive
// kernel parameter).
class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Linear algebra failed irrecoverably, or a bound/gradient became non-finite.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// The requested computation is not available for this configuration
// (e.g. analytic Psi statistics for a Matern mapping kernel).
class CapabilityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// File could not be read or written, or its content is malformed.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace vargplvm
