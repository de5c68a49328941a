#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "mvwave/errors.hpp"

namespace mvwave::quad {

// Gauss-Legendre rule on [-1, 1].  Nodes found by Newton iteration on P_n
// seeded with the Chebyshev angle estimate; accurate to machine precision
// for the orders used here (n <= 128).
struct GaussLegendre {
    std::vector<double> nodes;
    std::vector<double> weights;

    explicit GaussLegendre(int n) {
        if (n < 1) throw contract_error("GaussLegendre: order must be >= 1");
        nodes.resize(n);
        weights.resize(n);
        const int m = (n + 1) / 2;
        for (int i = 0; i < m; ++i) {
            double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
            double dp = 0.0;
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = x;
                for (int k = 2; k <= n; ++k) {
                    const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n * (x * p1 - p0) / (x * x - 1.0);
                const double dx = p1 / dp;
                x -= dx;
                if (std::abs(dx) < 1e-15) break;
            }
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            const double w = 2.0 / ((1.0 - x * x) * dp * dp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
    }
};

inline const GaussLegendre& gl_rule(int n) {
    static const GaussLegendre g8(8), g16(16), g32(32), g64(64);
    switch (n) {
        case 8: return g8;
        case 16: return g16;
        case 32: return g32;
        case 64: return g64;
        default: break;
    }
    thread_local GaussLegendre custom(1);
    if (static_cast<int>(custom.nodes.size()) != n) custom = GaussLegendre(n);
    return custom;
}

// ∫_a^b f, single panel of order n.
template <class F>
double integrate(F&& f, double a, double b, int n = 64) {
    const auto& g = gl_rule(n);
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    double acc = 0.0;
    for (std::size_t i = 0; i < g.nodes.size(); ++i)
        acc += g.weights[i] * f(mid + half * g.nodes[i]);
    return acc * half;
}

// ∫_a^b f with 0 < a <= b, panels split geometrically toward a.  Suited to
// integrands like 1/θ(s) that vary on a multiplicative scale.
template <class F>
double integrate_geometric(F&& f, double a, double b, int order = 32) {
    if (!(a > 0.0) || !(b >= a))
        throw contract_error("integrate_geometric: need 0 < a <= b");
    double acc = 0.0;
    double lo = a;
    while (lo < b) {
        const double hi = std::min(b, lo * 2.0);
        acc += integrate(f, lo, hi, order);
        if (hi >= b) break;
        lo = hi;
    }
    return acc;
}

}  // namespace mvwave::quad
