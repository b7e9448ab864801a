#pragma once

#include <stdexcept>
#include <string>

namespace turnlnl {

/// Invalid configuration: bad keys, out-of-range values, malformed config files.
/// CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Broken or inconsistent data: missing files, bad magic, mismatched lengths.
/// CLI maps this to exit code 3.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure: non-finite values where finite ones are required.
/// CLI maps this to exit code 4.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace turnlnl
