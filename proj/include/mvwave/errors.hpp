#pragma once

#include <stdexcept>
#include <string>

namespace mvwave {

// Violated precondition of an operation (dimension mismatch, bad argument).
struct contract_error : std::invalid_argument {
    explicit contract_error(const std::string& what) : std::invalid_argument(what) {}
};

// An operation that exists but is not supported for the given inputs
// (e.g. nonuniform weights in the exact transport solver).
struct unsupported_error : std::invalid_argument {
    explicit unsupported_error(const std::string& what) : std::invalid_argument(what) {}
};

// Bad experiment configuration (file contents, incompatible grid/delay, ...).
struct config_error : std::runtime_error {
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// Solver state left the finite range; carries the step index where it happened.
struct divergence_error : std::runtime_error {
    int step_index;
    divergence_error(const std::string& what, int step)
        : std::runtime_error(what), step_index(step) {}
};

}  // namespace mvwave
