#pragma once

// Exception hierarchy shared by every module. The CLI maps these onto exit codes.

#include <stdexcept>
#include <string>

namespace windcast {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file (bad header, ragged rows, non-finite values).
class SchemaError : public Error {
public:
    using Error::Error;
};

/// Mismatched dimensions between arguments.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Values outside the mathematical domain of an operation (negative speeds, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Invalid arguments or hyper-parameters.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Factorization failures, rank deficiency, integration blow-up.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Degenerate geometry (collinear point sets, points outside the mesh).
class GeometryError : public Error {
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

}  // namespace windcast
