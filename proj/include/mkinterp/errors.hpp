#pragma once

#include <stdexcept>
#include <string>

namespace mkinterp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed arguments or inputs (bad sizes, invalid options, duplicate nodes, ...).
class InvalidInput : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public InvalidInput {
public:
    using InvalidInput::InvalidInput;
};

class OddOrderUnsupported : public InvalidInput {
public:
    explicit OddOrderUnsupported(int m)
        : InvalidInput("order m=" + std::to_string(m) + " is not an even integer >= 2") {}
};

class InvalidExponent : public InvalidInput {
public:
    using InvalidInput::InvalidInput;
};

class PointOutsideDomain : public Error {
public:
    using Error::Error;
};

// Custom tables only know their tabulated points.
class PointNotTabulated : public PointOutsideDomain {
public:
    using PointOutsideDomain::PointOutsideDomain;
};

class BudgetExceeded : public Error {
public:
    using Error::Error;
};

class ZeroFunction : public Error {
public:
    using Error::Error;
};

class SingularGram : public Error {
public:
    using Error::Error;
};

}  // namespace mkinterp
