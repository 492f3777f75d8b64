// errors.hpp - exception taxonomy for the solver library
#pragma once

#include <stdexcept>
#include <string>

namespace mfbsde {

// base class for everything thrown by this library
struct error : std::runtime_error {
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

// mismatched dimensions between objects (clouds, fields, coefficients)
struct dimension_error : error {
    using error::error;
};

// argument outside the mathematical domain of an operation
struct domain_error : error {
    using error::error;
};

// input shape the operation does not support (e.g. unequal cloud sizes for
// exact assignment)
struct unsupported_error : error {
    using error::error;
};

// problem size above a hard cap
struct capacity_error : error {
    using error::error;
};

// non-finite value produced or consumed
struct numeric_error : error {
    using error::error;
};

// grid construction / grid compatibility failure
struct grid_error : error {
    using error::error;
};

// bad solver or problem configuration
struct config_error : error {
    using error::error;
};

// iteration or scheme blow-up (caps exceeded, too many reflections, ...)
struct divergence_error : error {
    using error::error;
};

// two runs that are not comparable (different seed / grid / particle count)
struct comparison_error : error {
    using error::error;
};

} // namespace mfbsde
