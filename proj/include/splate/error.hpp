#pragma once

#include <stdexcept>
#include <string>

namespace splate {

/// Shape disagreement between operands.
struct dimension_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Input that violates a documented precondition (bad term-id, empty list, ...).
struct validation_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct not_found_error : std::out_of_range {
    using std::out_of_range::out_of_range;
};

/// API misuse, e.g. back-propagating a loss that was recorded on another tape.
struct usage_error : std::logic_error {
    using std::logic_error::logic_error;
};

/// Malformed or unrecognized file contents.
struct format_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace splate
