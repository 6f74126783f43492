#pragma once

#include <stdexcept>
#include <string>

namespace wsipipe {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kRunLogVersion = 1;
inline constexpr int kSvmModelVersion = 1;
inline constexpr int kCnnModelVersion = 1;

// Base error for anything that goes wrong at runtime (I/O, parse, numerics).
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad user input detected before any work starts (flag values, precondition
// violations). The CLI maps this to its own exit code.
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

} // namespace wsipipe
