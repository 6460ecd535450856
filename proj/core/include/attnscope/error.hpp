#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace attnscope {

// Base of all toolkit errors. `code` is a stable machine-readable tag
// ("NonMonotonicTime", "DegenerateMap", ...) used by the CLI error JSON
// and asserted on in tests; `what()` carries the human-readable detail.
class Error : public std::runtime_error {
public:
    Error(std::string code, std::string detail)
        : std::runtime_error(code + ": " + detail),
          code_(std::move(code)),
          detail_(std::move(detail)) {}

    const std::string& code() const noexcept { return code_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    std::string code_;
    std::string detail_;
};

// Malformed or inconsistent input data (CLI exit 3).
class DataError : public Error {
public:
    using Error::Error;
};

// Numerically degenerate input: constant maps, zero mass, too few points
// (CLI exit 4).
class NumericError : public Error {
public:
    using Error::Error;
};

// Bad command line or config usage (CLI exit 2).
class UsageError : public Error {
public:
    using Error::Error;
};

}  // namespace attnscope
