#pragma once

#include <stdexcept>
#include <string>

namespace devstab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Malformed or semantically invalid input (manifests, configs, records).
class ParseError : public Error {
public:
    using Error::Error;
};

/// A byte stream that is not a decodable image.
class DecodeError : public Error {
public:
    using Error::Error;
};

/// A well-formed image in a color model this library refuses to convert.
class UnsupportedFormat : public DecodeError {
public:
    using DecodeError::DecodeError;
};

/// Arguments that violate an operation's precondition.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

} // namespace devstab
