#pragma once

#include <stdexcept>
#include <string>

namespace dva {

// Shape or rank disagreement between operands.
struct DimensionError : std::invalid_argument {
    explicit DimensionError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Caller violated a documented precondition (bad label, step out of range, ...).
struct ContractError : std::logic_error {
    explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

// Input is mathematically degenerate (zero-norm vector, empty bbox).
struct DegenerateInputError : std::invalid_argument {
    explicit DegenerateInputError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Malformed file contents; message carries location where known.
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite value where the training contract requires a finite one.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace dva
