#pragma once

#include <stdexcept>
#include <string>

namespace sysrisk {

/// Raised when inputs fail a contract (bad scenario file, invalid matrix, ...).
/// Maps to process exit code 1.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a computation fails numerically (indefinite matrix,
/// non-convergence, non-finite state). Maps to process exit code 2.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace sysrisk
