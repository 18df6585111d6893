#pragma once

#include <stdexcept>
#include <string>

namespace adq {

/// Base for all library errors. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent configuration (architecture, quant params, schedule).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Argument outside its documented domain.
class InputError : public Error {
public:
    using Error::Error;
};

/// API misuse, e.g. backward on a stale cache.
class UsageError : public Error {
public:
    using Error::Error;
};

/// Requested record does not exist.
class LookupError : public Error {
public:
    using Error::Error;
};

/// Broken internal invariant.
class InternalError : public Error {
public:
    using Error::Error;
};

} // namespace adq
