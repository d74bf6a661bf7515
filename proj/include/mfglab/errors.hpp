#pragma once

#include <stdexcept>
#include <string>

namespace mfglab {

/// Thrown when a caller breaks a documented precondition (mismatched grids,
/// out-of-range sizes, malformed identifiers). Maps to CLI exit code 4 when
/// it indicates an internal invariant breach, 2 when raised during config
/// validation.
class ContractError : public std::logic_error {
public:
    explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

/// Invalid mathematical input, e.g. nonpositive time for a heat kernel norm
/// or a nonpositive density where positivity is required.
class DomainError : public std::domain_error {
public:
    explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

/// Unknown names: coupling models, norm kinds, schemes, sweep axes.
class UsageError : public std::invalid_argument {
public:
    explicit UsageError(const std::string& what) : std::invalid_argument(what) {}
};

/// An iterative solver exhausted its budget. Carries the last residual so
/// failures can be reported honestly. Maps to CLI exit code 3.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, double last_residual, int iterations)
        : std::runtime_error(what), last_residual(last_residual), iterations(iterations) {}
    double last_residual;
    int iterations;
};

/// Numerical breakdown that is not a convergence failure: loss of positivity
/// in an exponential transform, singular space-time matrix, NaN propagation.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// Config file violates the published schema. Message carries a JSON-pointer
/// style location. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace mfglab
