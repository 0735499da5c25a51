#pragma once

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace misbayes {

// Invalid distribution or solver parameters (nonpositive shape, bad dimension, ...).
struct ParamError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Violated operation precondition (empty chain, t1 >= t2, mismatched sizes, ...).
struct ContractError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Numerical degeneracy: non-SPD matrix, collapsed summary variance, singular fit.
struct DegeneracyError : std::runtime_error {
    explicit DegeneracyError(const std::string& what,
                             double eigenvalue = std::numeric_limits<double>::quiet_NaN(),
                             int index = -1)
        : std::runtime_error(what), eigenvalue(eigenvalue), index(index) {}
    double eigenvalue;
    int index;  // offending coordinate/direction when known
};

// Iterative solver failed to converge; carries the last iterate for diagnosis.
struct ConvergenceError : std::runtime_error {
    explicit ConvergenceError(const std::string& what, std::vector<double> last = {})
        : std::runtime_error(what), last_iterate(std::move(last)) {}
    std::vector<double> last_iterate;
};

// Diverging coefficients in a binomial fit (complete or quasi separation).
struct SeparationError : ConvergenceError {
    using ConvergenceError::ConvergenceError;
};

// Rank-deficient or otherwise unusable design matrix.
struct DesignError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Data ingestion problems (parse failures, invariant violations).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Run configuration problems (unknown keys, out-of-range values).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite log target at the chain starting point.
struct InitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace misbayes
