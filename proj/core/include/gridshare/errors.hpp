#pragma once

#include <stdexcept>
#include <string>

namespace gridshare {

/// Base class of every error thrown by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Feeder graph is not a tree rooted at the slack bus.
struct TopologyError : Error {
    using Error::Error;
};

/// Vector/matrix size does not match the network dimension.
struct DimensionError : Error {
    using Error::Error;
};

/// Backward/forward sweep failed to converge.
struct PowerFlowDiverged : Error {
    using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
struct DomainError : Error {
    using Error::Error;
};

/// Operating envelope excludes every feasible consumption bundle.
struct EnvelopeInfeasible : Error {
    using Error::Error;
};

/// No consumption profile satisfies the voltage constraints.
struct Infeasible : Error {
    using Error::Error;
};

/// Dual ascent did not reach the requested residuals.
struct SolverDiverged : Error {
    using Error::Error;
};

/// Root bracketing failed after the expansion budget.
struct RootBracketError : Error {
    using Error::Error;
};

/// Input file violates the expected schema.
struct ConfigError : Error {
    using Error::Error;
};

/// Decentralized best responses do not reproduce the central optimum.
struct EquilibriumViolation : Error {
    using Error::Error;
};

}  // namespace gridshare
