#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "mvwave/errors.hpp"
#include "mvwave/noise.hpp"
#include "mvwave/quadrature.hpp"

namespace mvwave {

struct PowerInequality {
    double lhs;
    double rhs;
    bool holds;
};

// |a+b|^p <= (1 + r^{1/(p-1)})^{p-1} (|a|^p + |b|^p / r), p >= 2, r > 0.
inline PowerInequality power_inequality_check(double a, double b, double p, double r) {
    if (!(p >= 2.0)) throw contract_error("power_inequality_check: p must be >= 2");
    if (!(r > 0.0)) throw contract_error("power_inequality_check: r must be > 0");
    const double lhs = std::pow(std::abs(a + b), p);
    const double rhs = std::pow(1.0 + std::pow(r, 1.0 / (p - 1.0)), p - 1.0) *
                       (std::pow(std::abs(a), p) + std::pow(std::abs(b), p) / r);
    // direct float evaluation of both sides can cross by a few ulps
    return {lhs, rhs, lhs <= rhs * (1.0 + 1e-12)};
}

// u(t) <= u0 + ∫_0^t v θ(u) ds on a common grid, with θ concave nondecreasing
// and θ(r) > 0 for r > 0.
struct BihariProblem {
    double u0 = 0.0;
    std::vector<double> grid;  // 0 = t_0 < ... < t_m
    std::vector<double> v;     // sampled on grid, nonnegative
    std::function<double(double)> theta;

    BihariProblem(double u0_, std::vector<double> grid_, std::vector<double> v_,
                  std::function<double(double)> theta_)
        : u0(u0_), grid(std::move(grid_)), v(std::move(v_)), theta(std::move(theta_)) {
        if (u0 < 0.0) throw contract_error("BihariProblem: u0 must be >= 0");
        if (grid.size() < 2 || grid.size() != v.size())
            throw contract_error("BihariProblem: grid and v must match, size >= 2");
        if (grid.front() != 0.0) throw contract_error("BihariProblem: grid must start at 0");
        for (std::size_t i = 1; i < grid.size(); ++i)
            if (!(grid[i] > grid[i - 1]))
                throw contract_error("BihariProblem: grid must increase");
        if (!theta) throw contract_error("BihariProblem: null theta");
    }

    // ∫_0^t v by the trapezoid rule, with a partial last cell when t falls
    // between nodes.
    double v_integral(double t) const {
        if (t < 0.0 || t > grid.back() * (1.0 + 1e-12))
            throw contract_error("BihariProblem: t outside the sampled grid");
        double acc = 0.0;
        for (std::size_t i = 1; i < grid.size(); ++i) {
            if (t >= grid[i]) {
                acc += 0.5 * (v[i] + v[i - 1]) * (grid[i] - grid[i - 1]);
            } else {
                const double frac = (t - grid[i - 1]) / (grid[i] - grid[i - 1]);
                const double vt = v[i - 1] + frac * (v[i] - v[i - 1]);
                acc += 0.5 * (vt + v[i - 1]) * (t - grid[i - 1]);
                break;
            }
        }
        return acc;
    }
};

struct BihariBound {
    double value;
    bool in_domain;  // false when G(u0) + ∫v left the range of G
};

namespace detail {

// G(r) = ∫_1^r ds/θ(s); negative below 1.  Anchored at 1 as defined.
inline double bihari_g(const std::function<double(double)>& theta, double r) {
    if (!(r > 0.0)) throw contract_error("bihari_g: r must be > 0");
    if (r == 1.0) return 0.0;
    const auto f = [&](double s) { return 1.0 / theta(s); };
    return r > 1.0 ? quad::integrate_geometric(f, 1.0, r)
                   : -quad::integrate_geometric(f, r, 1.0);
}

// u0 = 0 is represented by this anchor when the Osgood integral converges.
inline constexpr double bihari_zero_anchor = 1e-300;

// Tail-increment probe for ∫_{0+} ds/θ: over the last 150 decades the
// increment is ~0.7 for θ = u·log(1/u), ~0.11 for the log-log form, and
// essentially 0 for convergent tails like θ = √u.  Divergence slower than
// triple-log is below this probe's resolution.
inline bool osgood_divergent(const std::function<double(double)>& theta) {
    const double tail = quad::integrate_geometric(
        [&](double s) { return 1.0 / theta(s); }, 1e-300, 1e-150);
    return tail >= 0.05;
}

}  // namespace detail

// u(t) <= G^{-1}(G(u0) + ∫_0^t v).  For u0 = 0 with a divergent Osgood
// integral the bound is identically 0 (the lemma's last clause); G^{-1} is
// computed by log-scale bisection on a geometrically grown bracket.
inline BihariBound bihari_bound(const BihariProblem& pb, double t) {
    if (pb.u0 == 0.0 && detail::osgood_divergent(pb.theta)) return {0.0, true};

    const double anchor = pb.u0 > 0.0 ? pb.u0 : detail::bihari_zero_anchor;
    const double target = detail::bihari_g(pb.theta, anchor) + pb.v_integral(t);

    if (pb.u0 == 0.0 && target <= detail::bihari_g(pb.theta, anchor))
        return {0.0, true};

    double lo = anchor;
    double hi = std::max(anchor, 1.0);
    // grow the bracket until G(hi) >= target (G is increasing)
    int guard = 0;
    while (detail::bihari_g(pb.theta, hi) < target) {
        hi *= 2.0;
        if (++guard > 2000 || hi > 1e290)
            return {std::numeric_limits<double>::infinity(), false};
    }
    guard = 0;
    while (detail::bihari_g(pb.theta, lo) > target) {
        lo *= 0.5;
        if (++guard > 2000 || lo < 1e-290) {
            // convergent G with target below G(0+): outside Dom(G^{-1})
            return {0.0, false};
        }
    }
    for (int it = 0; it < 200; ++it) {
        const double mid = std::sqrt(lo * hi);  // bisect on the log scale
        if (detail::bihari_g(pb.theta, mid) < target)
            lo = mid;
        else
            hi = mid;
        if (hi - lo <= 1e-12 * hi) break;
    }
    return {0.5 * (lo + hi), true};
}

// Linear θ collapses Bihari to the Gronwall bound u0·exp(∫_0^t v).
inline double gronwall_bound(double u0, const BihariProblem& pb, double t) {
    return u0 * std::exp(pb.v_integral(t));
}

struct GronwallCheck {
    double bihari;
    double gronwall;
    bool agree;
};

inline GronwallCheck gronwall_check(const BihariProblem& pb, double t, double tol = 1e-10) {
    const auto b = bihari_bound(pb, t);
    const double g = gronwall_bound(pb.u0, pb, t);
    const double scale = std::max({1.0, std::abs(g), std::abs(b.value)});
    return {b.value, g, b.in_domain && std::abs(b.value - g) <= tol * scale};
}

}  // namespace mvwave
