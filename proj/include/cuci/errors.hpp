#pragma once

#include <stdexcept>
#include <string>

namespace cuci {

/// Base of every error raised by the library. The CLI maps subclasses to
/// process exit codes (see `exit_code_for`).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad configuration, unknown variant id, malformed CLI usage.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A documented precondition was violated by the caller.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Missing or unreadable file, empty dataset.
class LoadError : public Error {
public:
    using Error::Error;
};

/// Dimension or shape disagreement against a manifest or checkpoint.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// Non-finite or otherwise invalid data values.
class DataError : public Error {
public:
    using Error::Error;
};

/// Divergence, non-finite gradients, failed gradient checks.
class NumericalError : public Error {
public:
    using Error::Error;
};

enum class ExitCode : int { Ok = 0, Usage = 2, Data = 3, Numerical = 4 };

inline ExitCode exit_code_for(const Error& e) {
    if (dynamic_cast<const NumericalError*>(&e) != nullptr) return ExitCode::Numerical;
    if (dynamic_cast<const LoadError*>(&e) != nullptr ||
        dynamic_cast<const SchemaError*>(&e) != nullptr ||
        dynamic_cast<const DataError*>(&e) != nullptr)
        return ExitCode::Data;
    return ExitCode::Usage;
}

}  // namespace cuci
