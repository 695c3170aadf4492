#pragma once

#include <stdexcept>
#include <string>

namespace edgesplat {

/// Raised when a numeric input is out of its domain (non-finite, out of range).
class InvalidParameter : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Missing, unreadable or malformed files.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Configuration or usage problems detected before any work starts.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Broken internal contract (e.g. backward without a matching forward).
class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

} // namespace edgesplat
