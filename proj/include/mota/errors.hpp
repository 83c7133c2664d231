#pragma once

#include <stdexcept>
#include <string>

namespace mota {

/// Base of every error raised by the library. The CLI maps subclasses to
/// exit codes (config -> 1, invariant -> 3, everything else -> 2).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

class ArgumentError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class StateError : public Error {
public:
    using Error::Error;
};

class InvariantError : public Error {
public:
    using Error::Error;
};

/// Raised when a sequential strategy asks for data of a task other than the
/// one currently being learned.
class DataAccessError : public InvariantError {
public:
    using InvariantError::InvariantError;
};

class DegenerateTrajectoryError : public Error {
public:
    using Error::Error;
};

class IncompleteMatrixError : public Error {
public:
    using Error::Error;
};

} // namespace mota
