#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "mvwave/errors.hpp"
#include "mvwave/rng.hpp"

namespace mvwave::stats {

inline double mean(std::span<const double> xs) {
    if (xs.empty()) throw contract_error("mean: empty sample");
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

// Unbiased sample variance.
inline double variance(std::span<const double> xs) {
    if (xs.size() < 2) throw contract_error("variance: need at least 2 samples");
    const double m = mean(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return s / static_cast<double>(xs.size() - 1);
}

namespace detail {

// Continued fraction for the regularized incomplete beta (Lentz).
inline double betacf(double a, double b, double x) {
    const double tiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 3e-15) break;
    }
    return h;
}

inline double betai(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double lb = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                      a * std::log(x) + b * std::log(1.0 - x);
    const double bt = std::exp(lb);
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
    return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

}  // namespace detail

// P(T <= t) for Student's t with df degrees of freedom.
inline double student_cdf(double t, double df) {
    if (!(df > 0.0)) throw contract_error("student_cdf: df must be > 0");
    const double x = df / (df + t * t);
    const double half_tail = 0.5 * detail::betai(0.5 * df, 0.5, x);
    return t >= 0.0 ? 1.0 - half_tail : half_tail;
}

struct WelchResult {
    double t_stat;
    double df;
    double p_one_sided;  // P(mean(b) > mean(a) under H0)
    bool significant_increase;
};

// One-sided Welch test of H1: mean(b) > mean(a).
inline WelchResult welch_one_sided(std::span<const double> a, std::span<const double> b,
                                   double alpha = 0.05) {
    const double ma = mean(a), mb = mean(b);
    const double va = variance(a) / static_cast<double>(a.size());
    const double vb = variance(b) / static_cast<double>(b.size());
    const double se2 = va + vb;
    if (se2 == 0.0) {
        const bool inc = mb > ma;
        return {inc ? std::numeric_limits<double>::infinity() : 0.0,
                static_cast<double>(a.size() + b.size() - 2), inc ? 0.0 : 1.0, inc};
    }
    const double t = (mb - ma) / std::sqrt(se2);
    const double df = se2 * se2 /
                      (va * va / static_cast<double>(a.size() - 1) +
                       vb * vb / static_cast<double>(b.size() - 1));
    const double p = 1.0 - student_cdf(t, df);
    return {t, df, p, p < alpha};
}

struct BootstrapCI {
    double estimate;
    double lo;
    double hi;
};

// Percentile bootstrap CI for the mean of xs.
inline BootstrapCI bootstrap_mean_ci(std::span<const double> xs, int reps,
                                     std::uint64_t seed, double level = 0.95) {
    if (xs.empty()) throw contract_error("bootstrap_mean_ci: empty sample");
    rng::CounterStream stream(seed, 0, rng::Purpose::Bootstrap);
    const std::size_t n = xs.size();
    std::vector<double> means(reps);
    for (int r = 0; r < reps; ++r) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            s += xs[stream.next_u64() % n];
        means[r] = s / static_cast<double>(n);
    }
    std::sort(means.begin(), means.end());
    const double tail = 0.5 * (1.0 - level);
    const auto idx = [&](double q) {
        const auto i = static_cast<std::size_t>(q * (reps - 1));
        return means[std::min(i, means.size() - 1)];
    };
    return {mean(xs), idx(tail), idx(1.0 - tail)};
}

// Least-squares slope of y against x.
inline double ols_slope(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2)
        throw contract_error("ols_slope: need matched samples of size >= 2");
    const double mx = mean(x), my = mean(y);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0) throw contract_error("ols_slope: degenerate abscissae");
    return sxy / sxx;
}

}  // namespace mvwave::stats
