#pragma once

#include <stdexcept>
#include <string>

namespace tftps {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// A value cannot be mapped into (or out of) the group.
class EncodingError : public Error {
public:
    using Error::Error;
};

/// Wire bytes could not be decoded.
class MalformedPacket : public Error {
public:
    using Error::Error;
};

class CalibrationError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace tftps
