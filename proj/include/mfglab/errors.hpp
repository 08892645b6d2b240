#pragma once

#include <stdexcept>
#include <string>

namespace mfg {

// Base class for all errors raised by the library. The CLI maps each
// subclass to a distinct process exit code.
class MfgError : public std::runtime_error {
public:
    explicit MfgError(const std::string& what) : std::runtime_error(what) {}
};

// Bad user input: malformed config file, unknown keys, out-of-range values,
// inconsistent field headers. CLI exit code 2.
class ConfigError : public MfgError {
public:
    explicit ConfigError(const std::string& what) : MfgError(what) {}
};

// An iterative solve failed to reach its tolerance within the iteration
// budget. CLI exit code 3.
class ConvergenceError : public MfgError {
public:
    explicit ConvergenceError(const std::string& what) : MfgError(what) {}
};

// A linear system used during reconstruction is too ill-conditioned to
// trust at the requested tolerance. CLI exit code 4.
class ConditioningError : public MfgError {
public:
    explicit ConditioningError(const std::string& what) : MfgError(what) {}
};

}  // namespace mfg
