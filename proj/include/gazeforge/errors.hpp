#pragma once

#include <stdexcept>
#include <string>

namespace gazeforge {

// Shape/extent violations (mismatched operands, zero-sized outputs, ...).
struct shape_error : std::runtime_error {
    explicit shape_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Domain violations on values (nonpositive scale factors, log of nonpositive
// entries, degenerate normalization planes, ...).
struct value_error : std::runtime_error {
    explicit value_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Unknown names (layers, ops, config keys).
struct lookup_error : std::runtime_error {
    explicit lookup_error(const std::string& msg) : std::runtime_error(msg) {}
};

// API misuse: backward on a detached loss, empty inputs where content is
// required, replaying a tape twice.
struct usage_error : std::runtime_error {
    explicit usage_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Runtime numerical failure (divergent training, non-finite loss terms).
struct numeric_error : std::runtime_error {
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace gazeforge
