#pragma once

#include <stdexcept>

namespace sfwm {

/// Invalid circuit document or command configuration. CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A state vanished entirely, e.g. perfect destructive interference or a
/// filter that rejects everything. CLI exit code 3.
class ZeroStateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numerical sanity check failed (non-finite input, non-positive-semidefinite
/// density matrix, ...). CLI exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The brute-force validation suite found a disagreement. CLI exit code 4.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace sfwm
