#pragma once

#include <stdexcept>
#include <string>

namespace rgcl {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Precondition on an argument violated (shape, range, size).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Malformed input file or serialized state.
class FormatError : public Error {
public:
    using Error::Error;
};

/// NaN / inf encountered where finite values are required.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Run configuration rejected during validation.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace rgcl
