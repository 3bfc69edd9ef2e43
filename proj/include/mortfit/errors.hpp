#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mortfit {

/// Malformed input text. Carries the 1-based line number of the offending row.
class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string &what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_{line} {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Well-formed input whose content violates a data invariant (duplicate keys,
/// missing cells, non-positive exposures, zero deaths).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An iterative kernel failed or hit a numerically degenerate configuration.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A sum-to-one normalization was requested on a direction whose sum is ~0.
class DegenerateNormalizationError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// The requested operation is not available for this input (e.g. Poisson
/// likelihood on a rate-only surface).
class CapabilityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace mortfit
