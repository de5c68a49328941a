#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "mvwave/errors.hpp"

namespace mvwave {

// Weighted point cloud on R^d standing in for a probability measure with
// finite second moment.  Weights sum to 1; the mean and second moment are
// cached at construction.  δ_0 is the single-point cloud at the origin.
class EmpiricalMeasure {
  public:
    explicit EmpiricalMeasure(std::vector<Eigen::VectorXd> points)
        : EmpiricalMeasure(std::move(points), {}) {}

    EmpiricalMeasure(std::vector<Eigen::VectorXd> points, std::vector<double> weights)
        : points_(std::move(points)), weights_(std::move(weights)) {
        if (points_.empty()) throw contract_error("EmpiricalMeasure: empty cloud");
        const auto n = points_.size();
        if (weights_.empty()) {
            weights_.assign(n, 1.0 / static_cast<double>(n));
            uniform_ = true;
        } else {
            if (weights_.size() != n)
                throw contract_error("EmpiricalMeasure: weights/points size mismatch");
            double sum = 0.0;
            for (double w : weights_) {
                if (w < 0.0) throw contract_error("EmpiricalMeasure: negative weight");
                sum += w;
            }
            if (std::abs(sum - 1.0) > 1e-12)
                throw contract_error("EmpiricalMeasure: weights must sum to 1");
            uniform_ = std::all_of(weights_.begin(), weights_.end(), [&](double w) {
                return std::abs(w - 1.0 / static_cast<double>(n)) <= 1e-15;
            });
        }
        const auto d = points_.front().size();
        mean_ = Eigen::VectorXd::Zero(d);
        second_moment_ = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (points_[i].size() != d)
                throw contract_error("EmpiricalMeasure: mixed point dimensions");
            mean_ += weights_[i] * points_[i];
            second_moment_ += weights_[i] * points_[i].squaredNorm();
        }
    }

    static EmpiricalMeasure dirac(const Eigen::VectorXd& x) {
        return EmpiricalMeasure(std::vector<Eigen::VectorXd>{x});
    }

    static EmpiricalMeasure dirac_zero(int dim) {
        return dirac(Eigen::VectorXd::Zero(dim));
    }

    // Columns of `states` become the points of a uniform cloud.
    static EmpiricalMeasure from_columns(const Eigen::MatrixXd& states) {
        std::vector<Eigen::VectorXd> pts;
        pts.reserve(static_cast<std::size_t>(states.cols()));
        for (Eigen::Index i = 0; i < states.cols(); ++i) pts.push_back(states.col(i));
        return EmpiricalMeasure(std::move(pts));
    }

    int dim() const { return static_cast<int>(points_.front().size()); }
    std::size_t size() const { return points_.size(); }
    const Eigen::VectorXd& point(std::size_t i) const { return points_[i]; }
    double weight(std::size_t i) const { return weights_[i]; }
    bool uniform_weights() const { return uniform_; }
    const Eigen::VectorXd& mean() const { return mean_; }

    // Σ w_i ‖x_i‖² = W₂(μ, δ₀)², exact and O(N).
    double second_moment() const { return second_moment_; }

    EmpiricalMeasure translated(const Eigen::VectorXd& v) const {
        std::vector<Eigen::VectorXd> pts;
        pts.reserve(points_.size());
        for (const auto& p : points_) pts.push_back(p + v);
        return EmpiricalMeasure(std::move(pts), weights_);
    }

  private:
    std::vector<Eigen::VectorXd> points_;
    std::vector<double> weights_;
    Eigen::VectorXd mean_;
    double second_moment_ = 0.0;
    bool uniform_ = true;
};

inline double w2_to_dirac0_squared(const EmpiricalMeasure& mu) {
    return mu.second_moment();
}

namespace detail {

inline void require_uniform_equal(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                                  const char* who) {
    if (!mu.uniform_weights() || !nu.uniform_weights())
        throw unsupported_error(std::string(who) + ": nonuniform weights unsupported");
    if (mu.size() != nu.size())
        throw contract_error(std::string(who) + ": clouds must have equal size");
    if (mu.dim() != nu.dim())
        throw contract_error(std::string(who) + ": dimension mismatch");
}

// Assignment problem by the Hungarian method with potentials, O(N^3).
// Returns the minimal total cost over permutations.
inline double hungarian_min_cost(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            int j1 = -1;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    double total = 0.0;
    for (int j = 1; j <= n; ++j) total += cost(p[j] - 1, j - 1);
    return total;
}

inline Eigen::MatrixXd sq_dist_matrix(const EmpiricalMeasure& mu,
                                      const EmpiricalMeasure& nu) {
    Eigen::MatrixXd c(mu.size(), nu.size());
    for (std::size_t i = 0; i < mu.size(); ++i)
        for (std::size_t j = 0; j < nu.size(); ++j)
            c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                (mu.point(i) - nu.point(j)).squaredNorm();
    return c;
}

}  // namespace detail

// W₂ in one dimension via monotone rearrangement of equal-size uniform clouds.
inline double w2_quantile_1d(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    if (mu.dim() != 1 || nu.dim() != 1)
        throw unsupported_error("w2_quantile_1d: requires dimension 1");
    detail::require_uniform_equal(mu, nu, "w2_quantile_1d");
    std::vector<double> xs(mu.size()), ys(nu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) {
        xs[i] = mu.point(i)(0);
        ys[i] = nu.point(i)(0);
    }
    std::sort(xs.begin(), xs.end());
    std::sort(ys.begin(), ys.end());
    double acc = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i)
        acc += (xs[i] - ys[i]) * (xs[i] - ys[i]);
    return std::sqrt(acc / static_cast<double>(xs.size()));
}

// Exact W₂ for equal-size uniform clouds: optimal assignment on the squared
// distance cost.  Coincides with w2_quantile_1d when d = 1.
inline double w2_exact(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                       std::size_t size_cap = 512) {
    detail::require_uniform_equal(mu, nu, "w2_exact");
    if (mu.size() > size_cap)
        throw unsupported_error(
            "w2_exact: cloud size exceeds cap; use w2_entropic for large clouds");
    const double total = detail::hungarian_min_cost(detail::sq_dist_matrix(mu, nu));
    return std::sqrt(std::max(0.0, total / static_cast<double>(mu.size())));
}

// Mean transport cost of the coupling that pairs point i of mu with point
// sigma(i) of nu.  Any such coupling upper-bounds w2_exact.
inline double w2_permutation_cost(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                                  const std::vector<std::size_t>& sigma) {
    detail::require_uniform_equal(mu, nu, "w2_permutation_cost");
    if (sigma.size() != mu.size())
        throw contract_error("w2_permutation_cost: permutation size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < sigma.size(); ++i)
        acc += (mu.point(i) - nu.point(sigma[i])).squaredNorm();
    return std::sqrt(acc / static_cast<double>(mu.size()));
}

struct EntropicResult {
    double value = 0.0;     // debiased Sinkhorn estimate of W₂
    bool approximate = true;
    bool converged = false;
    double marginal_residual = 0.0;
};

namespace detail {

struct SinkhornPlan {
    double transport_cost;
    double marginal_residual;
};

inline SinkhornPlan sinkhorn_sq(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                                double reg, int iters) {
    const auto cost = sq_dist_matrix(mu, nu);
    const auto ni = static_cast<Eigen::Index>(mu.size());
    const auto nj = static_cast<Eigen::Index>(nu.size());
    Eigen::VectorXd la(ni), lb(nj);
    for (Eigen::Index i = 0; i < ni; ++i) la(i) = std::log(mu.weight(i));
    for (Eigen::Index j = 0; j < nj; ++j) lb(j) = std::log(nu.weight(j));
    Eigen::VectorXd f = Eigen::VectorXd::Zero(ni), g = Eigen::VectorXd::Zero(nj);
    const auto lse_row = [&](Eigen::Index i) {
        double m = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < nj; ++j)
            m = std::max(m, (g(j) - cost(i, j)) / reg + lb(j));
        double s = 0.0;
        for (Eigen::Index j = 0; j < nj; ++j)
            s += std::exp((g(j) - cost(i, j)) / reg + lb(j) - m);
        return m + std::log(s);
    };
    const auto lse_col = [&](Eigen::Index j) {
        double m = -std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < ni; ++i)
            m = std::max(m, (f(i) - cost(i, j)) / reg + la(i));
        double s = 0.0;
        for (Eigen::Index i = 0; i < ni; ++i)
            s += std::exp((f(i) - cost(i, j)) / reg + la(i) - m);
        return m + std::log(s);
    };
    for (int it = 0; it < iters; ++it) {
        for (Eigen::Index i = 0; i < ni; ++i) f(i) = -reg * lse_row(i);
        for (Eigen::Index j = 0; j < nj; ++j) g(j) = -reg * lse_col(j);
    }
    double transport = 0.0;
    double residual = 0.0;
    for (Eigen::Index i = 0; i < ni; ++i) {
        double row_mass = 0.0;
        for (Eigen::Index j = 0; j < nj; ++j) {
            const double pij = std::exp((f(i) + g(j) - cost(i, j)) / reg + la(i) + lb(j));
            transport += pij * cost(i, j);
            row_mass += pij;
        }
        residual = std::max(residual, std::abs(row_mass - mu.weight(i)));
    }
    return {transport, residual};
}

}  // namespace detail

// Entropically regularized W₂ surrogate (log-domain Sinkhorn, debiased with
// the self-transport terms).  Always flagged approximate.
inline EntropicResult w2_entropic(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                                  double reg, int iters) {
    if (!(reg > 0.0)) throw contract_error("w2_entropic: reg must be > 0");
    if (iters < 1) throw contract_error("w2_entropic: iters must be >= 1");
    if (mu.dim() != nu.dim()) throw contract_error("w2_entropic: dimension mismatch");
    const auto ab = detail::sinkhorn_sq(mu, nu, reg, iters);
    const auto aa = detail::sinkhorn_sq(mu, mu, reg, iters);
    const auto bb = detail::sinkhorn_sq(nu, nu, reg, iters);
    const double debiased =
        ab.transport_cost - 0.5 * aa.transport_cost - 0.5 * bb.transport_cost;
    EntropicResult r;
    r.value = std::sqrt(std::max(0.0, debiased));
    r.marginal_residual = ab.marginal_residual;
    r.converged = ab.marginal_residual <= 1e-3;
    return r;
}

enum class W2Mode { Exact, Quantile1D, Entropic };

}  // namespace mvwave
