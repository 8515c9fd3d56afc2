#pragma once

#include <stdexcept>
#include <string>

namespace abstain {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed bytes on disk: bad magic, unsupported version, unparsable manifest.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Manifest dimensions disagree with tensor data (truncated or oversized sections).
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Filesystem failures: missing files, unwritable destinations.
class IoError : public Error {
public:
    using Error::Error;
};

/// A sample lacks a tensor section or evidence field an operation needs.
class MissingSectionError : public Error {
public:
    using Error::Error;
};

/// A probe and a dump whose feature dimensions cannot be combined.
class IncompatibleError : public Error {
public:
    using Error::Error;
};

}  // namespace abstain
