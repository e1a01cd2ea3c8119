#pragma once

#include <stdexcept>
#include <string>

namespace childgrad {

// Shape or alignment mismatch. The message names the offending node or operand.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Non-finite loss, gradient or parameter value.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration or argument outside an operation's domain.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace childgrad
