#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "mvwave/errors.hpp"
#include "mvwave/quadrature.hpp"
#include "mvwave/rng.hpp"

namespace mvwave {

/*
 * Strongly continuous cosine/sine operator families from spectral data.
 *
 * The generator A is given by an orthogonal eigenbasis U and nonpositive
 * eigenvalues λ_i.  Writing ω_i = sqrt(-λ_i), the families act diagonally in
 * the eigenbasis:
 *
 *   C(t) = U diag(cos(t ω_i)) Uᵀ
 *   S(t) = U diag(sin(t ω_i)/ω_i) Uᵀ        (entry t when ω_i = 0)
 *   A S(t) = U diag(-ω_i sin(t ω_i)) Uᵀ     (entry 0 when ω_i = 0)
 *
 * Under an orthogonal U the operator norms are exact maxima over the
 * eigendirections, so the family bounds are computed rather than estimated.
 */

// Largest singular value via power iteration on MᵀM; deterministic start.
inline double operator_norm(const Eigen::MatrixXd& m, int iters = 200) {
    if (m.rows() == 0 || m.cols() == 0) return 0.0;
    const Eigen::MatrixXd mtm = m.transpose() * m;
    Eigen::VectorXd v = Eigen::VectorXd::Ones(m.cols()).normalized();
    rng::CounterStream stream(0x5eedULL, 0, rng::Purpose::Diagnostics);
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) += 0.01 * stream.uniform01();
    v.normalize();
    double lambda = 0.0;
    for (int it = 0; it < iters; ++it) {
        Eigen::VectorXd w = mtm * v;
        const double n = w.norm();
        if (n == 0.0) return 0.0;
        v = w / n;
        lambda = n;
    }
    return std::sqrt(lambda);
}

struct SpectralGenerator {
    int dim;
    Eigen::VectorXd eigenvalues;  // λ_i <= 0
    Eigen::MatrixXd basis;        // orthogonal U, columns are eigenvectors
    Eigen::MatrixXd damping;      // B
    double damping_bound;         // M_B >= ‖B‖

    // Pass damping_bound < 0 to have it computed by power iteration.
    SpectralGenerator(int d, Eigen::VectorXd lambdas, Eigen::MatrixXd u,
                      Eigen::MatrixXd b, double m_b = -1.0)
        : dim(d),
          eigenvalues(std::move(lambdas)),
          basis(std::move(u)),
          damping(std::move(b)),
          damping_bound(m_b) {
        if (dim < 1) throw contract_error("SpectralGenerator: dim must be >= 1");
        if (eigenvalues.size() != dim)
            throw contract_error("SpectralGenerator: eigenvalue count != dim");
        for (Eigen::Index i = 0; i < eigenvalues.size(); ++i)
            if (eigenvalues(i) > 0.0)
                throw contract_error("SpectralGenerator: eigenvalues must be <= 0");
        if (basis.rows() != dim || basis.cols() != dim)
            throw contract_error("SpectralGenerator: basis must be dim x dim");
        const double ortho =
            (basis.transpose() * basis - Eigen::MatrixXd::Identity(dim, dim))
                .cwiseAbs()
                .maxCoeff();
        if (ortho > 1e-10)
            throw contract_error("SpectralGenerator: basis not orthogonal to 1e-10");
        if (damping.rows() != dim || damping.cols() != dim)
            throw contract_error("SpectralGenerator: damping must be dim x dim");
        const double bnorm = operator_norm(damping);
        if (damping_bound < 0.0) {
            damping_bound = bnorm * (1.0 + 1e-12) + 1e-300;
        } else if (bnorm > damping_bound * (1.0 + 1e-9) + 1e-12) {
            throw contract_error("SpectralGenerator: ‖B‖ exceeds damping_bound");
        }
        trivial_basis_ = basis.isIdentity(0.0);
    }

    // Diagonal generator: λ_i as given, U = I, B = b·I.
    static SpectralGenerator diagonal(Eigen::VectorXd lambdas, double b = 0.0) {
        const int d = static_cast<int>(lambdas.size());
        return SpectralGenerator(d, std::move(lambdas), Eigen::MatrixXd::Identity(d, d),
                                 b * Eigen::MatrixXd::Identity(d, d));
    }

    static SpectralGenerator scalar(double lambda, double b = 0.0) {
        Eigen::VectorXd l(1);
        l << lambda;
        return diagonal(l, b);
    }

    bool trivial_basis() const { return trivial_basis_; }

  private:
    bool trivial_basis_ = false;
};

class CosineFamily {
  public:
    CosineFamily(SpectralGenerator gen, double horizon)
        : gen_(std::move(gen)), horizon_(horizon) {
        if (!(horizon_ > 0.0)) throw contract_error("CosineFamily: horizon must be > 0");
        omega_.resize(gen_.dim);
        for (int i = 0; i < gen_.dim; ++i)
            omega_(i) = std::sqrt(-gen_.eigenvalues(i));
        // sup over a dense grid of ‖S(t)‖² + ‖C(t)‖²; exact per grid point.
        double sup = 0.0;
        const int grid_n = 4096;
        for (int j = 0; j <= grid_n; ++j) {
            const double t = horizon_ * j / grid_n;
            const double v = sine_norm(t) * sine_norm(t) + cosine_norm(t) * cosine_norm(t);
            sup = std::max(sup, v);
        }
        m1_bound_ = sup * (1.0 + 1e-9) + 1e-12;
        // ‖S(t) - S(r)‖ = ‖∫_r^t C‖ <= |t - r| since ‖C(u)‖ <= 1.
        ns_bound_ = 1.0;
    }

    const SpectralGenerator& generator() const { return gen_; }
    int dim() const { return gen_.dim; }
    double horizon() const { return horizon_; }
    double m1_bound() const { return m1_bound_; }
    double ns_bound() const { return ns_bound_; }
    const Eigen::VectorXd& omega() const { return omega_; }

    double cosine_entry(int i, double t) const { return std::cos(t * omega_(i)); }

    double sine_entry(int i, double t) const {
        const double w = omega_(i);
        if (w == 0.0) return t;  // analytic limit of sin(tω)/ω
        return std::sin(t * w) / w;
    }

    double a_sine_entry(int i, double t) const {
        return -omega_(i) * std::sin(t * omega_(i));
    }

    double cosine_norm(double t) const {
        double m = 0.0;
        for (int i = 0; i < gen_.dim; ++i) m = std::max(m, std::abs(cosine_entry(i, t)));
        return m;
    }

    double sine_norm(double t) const {
        double m = 0.0;
        for (int i = 0; i < gen_.dim; ++i) m = std::max(m, std::abs(sine_entry(i, t)));
        return m;
    }

    Eigen::VectorXd to_eigenbasis(const Eigen::VectorXd& x) const {
        return gen_.trivial_basis() ? x : Eigen::VectorXd(gen_.basis.transpose() * x);
    }

    Eigen::VectorXd from_eigenbasis(const Eigen::VectorXd& xe) const {
        return gen_.trivial_basis() ? xe : Eigen::VectorXd(gen_.basis * xe);
    }

  private:
    SpectralGenerator gen_;
    double horizon_;
    Eigen::VectorXd omega_;
    double m1_bound_ = 0.0;
    double ns_bound_ = 1.0;
};

namespace detail {

inline void require_dim(const CosineFamily& fam, const Eigen::VectorXd& x,
                        const char* who) {
    if (x.size() != fam.dim())
        throw contract_error(std::string(who) + ": vector dimension mismatch");
}

template <class Entry>
Eigen::VectorXd apply_diagonal(const CosineFamily& fam, const Eigen::VectorXd& x,
                               Entry&& entry) {
    Eigen::VectorXd xe = fam.to_eigenbasis(x);
    for (int i = 0; i < fam.dim(); ++i) xe(i) *= entry(i);
    return fam.from_eigenbasis(xe);
}

}  // namespace detail

inline Eigen::VectorXd cosine_apply(const CosineFamily& fam, double t,
                                    const Eigen::VectorXd& x) {
    detail::require_dim(fam, x, "cosine_apply");
    return detail::apply_diagonal(fam, x, [&](int i) { return fam.cosine_entry(i, t); });
}

inline Eigen::VectorXd sine_apply(const CosineFamily& fam, double t,
                                  const Eigen::VectorXd& x) {
    detail::require_dim(fam, x, "sine_apply");
    return detail::apply_diagonal(fam, x, [&](int i) { return fam.sine_entry(i, t); });
}

inline Eigen::VectorXd a_sine_apply(const CosineFamily& fam, double t,
                                    const Eigen::VectorXd& x) {
    detail::require_dim(fam, x, "a_sine_apply");
    return detail::apply_diagonal(fam, x, [&](int i) { return fam.a_sine_entry(i, t); });
}

inline Eigen::VectorXd generator_apply(const CosineFamily& fam,
                                       const Eigen::VectorXd& x) {
    detail::require_dim(fam, x, "generator_apply");
    return detail::apply_diagonal(fam, x,
                                  [&](int i) { return fam.generator().eigenvalues(i); });
}

struct IdentityReport {
    double dalembert = 0.0;        // C(t+s) + C(t-s) = 2 C(t) C(s)
    double integral_identity = 0.0;  // A ∫_s^r S(u) du = C(r) - C(s)
    double product_identity = 0.0;   // C(t+s) - C(t-s) = 2 A S(t) S(s)
    double sine_integral = 0.0;      // S(t) = ∫_0^t C(u) du
    double lipschitz_ratio = 0.0;    // max ‖S(t)-S(r)‖ / |t-r| over the grid
    double grid_m1 = 0.0;            // max ‖S‖² + ‖C‖² over the grid

    bool within(double tol_identity, double tol_quadrature, double ns_bound,
                double m1_bound) const {
        return dalembert <= tol_identity && product_identity <= tol_identity &&
               integral_identity <= tol_quadrature && sine_integral <= tol_quadrature &&
               lipschitz_ratio <= ns_bound && grid_m1 <= m1_bound;
    }
};

// Max residual of each family identity over grid x trials random unit vectors.
inline IdentityReport identity_residuals(const CosineFamily& fam,
                                         const std::vector<std::pair<double, double>>& grid,
                                         int trials, std::uint64_t seed = 0x1d5eedULL) {
    if (grid.empty()) throw contract_error("identity_residuals: empty grid");
    if (trials < 1) throw contract_error("identity_residuals: trials must be >= 1");
    IdentityReport rep;
    const int d = fam.dim();
    rng::CounterStream stream(seed, 0, rng::Purpose::Diagnostics);
    for (int trial = 0; trial < trials; ++trial) {
        Eigen::VectorXd x(d);
        for (int i = 0; i < d; ++i) x(i) = stream.normal();
        if (x.norm() == 0.0) x(0) = 1.0;
        x.normalize();
        for (const auto& [t, s] : grid) {
            const Eigen::VectorXd ct_s = cosine_apply(fam, t + s, x);
            const Eigen::VectorXd ct_ms = cosine_apply(fam, t - s, x);
            const Eigen::VectorXd two_ctcs =
                2.0 * cosine_apply(fam, t, cosine_apply(fam, s, x));
            rep.dalembert = std::max(rep.dalembert, (ct_s + ct_ms - two_ctcs).norm());

            const Eigen::VectorXd two_as =
                2.0 * a_sine_apply(fam, t, sine_apply(fam, s, x));
            rep.product_identity =
                std::max(rep.product_identity, (ct_s - ct_ms - two_as).norm());

            const double lo = std::min(t, s), hi = std::max(t, s);
            Eigen::VectorXd integral = Eigen::VectorXd::Zero(d);
            {
                const auto& g = quad::gl_rule(64);
                const double half = 0.5 * (hi - lo), mid = 0.5 * (hi + lo);
                for (std::size_t q = 0; q < g.nodes.size(); ++q)
                    integral += g.weights[q] * sine_apply(fam, mid + half * g.nodes[q], x);
                integral *= half;
            }
            const Eigen::VectorXd lhs = generator_apply(fam, integral);
            const Eigen::VectorXd rhs =
                cosine_apply(fam, hi, x) - cosine_apply(fam, lo, x);
            rep.integral_identity = std::max(rep.integral_identity, (lhs - rhs).norm());

            Eigen::VectorXd cint = Eigen::VectorXd::Zero(d);
            {
                const auto& g = quad::gl_rule(64);
                const double half = 0.5 * t, mid = 0.5 * t;
                for (std::size_t q = 0; q < g.nodes.size(); ++q)
                    cint += g.weights[q] * cosine_apply(fam, mid + half * g.nodes[q], x);
                cint *= half;
            }
            rep.sine_integral =
                std::max(rep.sine_integral, (sine_apply(fam, t, x) - cint).norm());

            if (t != s) {
                const double num = (sine_apply(fam, t, x) - sine_apply(fam, s, x)).norm();
                rep.lipschitz_ratio =
                    std::max(rep.lipschitz_ratio, num / std::abs(t - s));
            }
            rep.grid_m1 = std::max({rep.grid_m1,
                                    fam.sine_norm(t) * fam.sine_norm(t) +
                                        fam.cosine_norm(t) * fam.cosine_norm(t),
                                    fam.sine_norm(s) * fam.sine_norm(s) +
                                        fam.cosine_norm(s) * fam.cosine_norm(s)});
        }
    }
    return rep;
}

}  // namespace mvwave
