#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace slowfast {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller passed an argument outside the operation's domain.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// A coefficient evaluation produced a non-finite value or broke a declared bound.
class EvaluationError : public Error {
public:
    using Error::Error;
};

/// A structural property (symmetry, shape) failed at a sample point.
class StructuralError : public Error {
public:
    using Error::Error;
};

/// A numerical routine could not meet its tolerance.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// An operation's documented precondition on the model was violated.
class ContractError : public Error {
public:
    using Error::Error;
};

/// Unknown registry key.
class LookupError : public Error {
public:
    using Error::Error;
};

/// Too few usable data points for a fit.
class InsufficientDataError : public Error {
public:
    using Error::Error;
};

/// A trajectory left the finite range. Carries where it happened.
class BlowUpError : public Error {
public:
    BlowUpError(double time, std::vector<double> state);

    double time() const noexcept { return time_; }
    const std::vector<double>& state() const noexcept { return state_; }

private:
    double time_;
    std::vector<double> state_;
};

}  // namespace slowfast
