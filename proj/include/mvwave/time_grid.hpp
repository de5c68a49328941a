#pragma once

#include "mvwave/errors.hpp"

namespace mvwave {

// Uniform grid 0 = t_0 < t_1 < ... < t_n.  The stored horizon is n·h, so the
// last node equals the horizon bit-exactly.
struct TimeGrid {
    int n_steps;
    double h;
    double horizon;

    TimeGrid(double requested_horizon, int n) : n_steps(n) {
        if (n < 1) throw contract_error("TimeGrid: n_steps must be >= 1");
        if (!(requested_horizon > 0.0)) throw contract_error("TimeGrid: horizon must be > 0");
        h = requested_horizon / n;
        horizon = h * n;
    }

    double node(int j) const { return h * j; }
    int n_nodes() const { return n_steps + 1; }
};

}  // namespace mvwave
