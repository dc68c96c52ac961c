#pragma once

#include <stdexcept>
#include <string>

namespace grainpipe {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A value is outside its allowed range (e.g. a 12-bit sample > 4095).
class ValueError : public Error {
public:
    using Error::Error;
};

/// A byte stream or file does not match its declared layout.
class FormatError : public Error {
public:
    using Error::Error;
};

/// A geometric precondition failed (degenerate polygon, invalid scale factor, ...).
class GeometryError : public Error {
public:
    using Error::Error;
};

/// An expected scene feature could not be found (white references, dish,
/// markers, chessboards, grid lines, kernel foreground, ...).
class DetectionError : public Error {
public:
    using Error::Error;
};

/// Robust model fitting could not produce a usable model.
class EstimationError : public Error {
public:
    using Error::Error;
};

} // namespace grainpipe
