#pragma once

#include <stdexcept>
#include <string>

namespace her {

/// Invalid or inconsistent configuration (layer chains, env parameters, flag combinations).
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// Dimension mismatch between a value and the object it is applied to.
class ShapeError : public std::invalid_argument {
public:
    explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

/// An operation called outside its contract (empty buffer, out-of-range action, ...).
class UsageError : public std::logic_error {
public:
    explicit UsageError(const std::string& what) : std::logic_error(what) {}
};

}  // namespace her
