#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mvwave/errors.hpp"
#include "mvwave/measure.hpp"
#include "mvwave/noise.hpp"
#include "mvwave/quadrature.hpp"
#include "mvwave/rng.hpp"

namespace mvwave {

/*
 * Concave moduli replacing Lipschitz continuity.  Built-in forms, with
 * δ ∈ (0,1) and the linear extension above δ using the left derivative:
 *
 *   linear:  Ψ(u) = γ u
 *   log:     Ψ(u) = u log(1/u)                 on [0, δ]
 *            slope log(1/δ) - 1                above δ
 *   loglog:  Ψ(u) = u log(1/u) log log(1/u)    on [0, δ]
 *            slope L·LL - LL - 1 at δ, L = log(1/δ), LL = log L
 *
 * The log/loglog forms are nondecreasing only for δ small enough (below 1/e
 * resp. smaller); shape_ok() checks that on a grid instead of the
 * constructor, so the piecewise formulas stay evaluable for any δ ∈ (0,1).
 */
class Modulus {
  public:
    enum class Kind { Linear, Log, LogLog, Custom };

    static Modulus linear(double gamma) {
        if (!(gamma > 0.0)) throw contract_error("Modulus: gamma must be > 0");
        Modulus m;
        m.kind_ = Kind::Linear;
        m.gamma_ = gamma;
        return m;
    }

    static Modulus log_modulus(double delta) {
        Modulus m;
        m.kind_ = Kind::Log;
        m.delta_ = check_delta(delta);
        return m;
    }

    static Modulus loglog_modulus(double delta) {
        Modulus m;
        m.kind_ = Kind::LogLog;
        m.delta_ = check_delta(delta);
        return m;
    }

    static Modulus custom(std::function<double(double)> f, std::string name = "custom") {
        if (!f) throw contract_error("Modulus: null custom function");
        Modulus m;
        m.kind_ = Kind::Custom;
        m.custom_ = std::move(f);
        m.name_ = std::move(name);
        return m;
    }

    Kind kind() const { return kind_; }
    double delta() const { return delta_; }
    double gamma() const { return gamma_; }

    double operator()(double u) const {
        if (u < 0.0) throw contract_error("Modulus: argument must be >= 0");
        switch (kind_) {
            case Kind::Linear:
                return gamma_ * u;
            case Kind::Log: {
                if (u == 0.0) return 0.0;
                if (u <= delta_) return u * std::log(1.0 / u);
                const double slope = std::log(1.0 / delta_) - 1.0;
                return delta_ * std::log(1.0 / delta_) + slope * (u - delta_);
            }
            case Kind::LogLog: {
                if (u == 0.0) return 0.0;
                if (u <= delta_) {
                    const double l = std::log(1.0 / u);
                    return u * l * std::log(l);
                }
                const double l = std::log(1.0 / delta_);
                const double ll = std::log(l);
                const double slope = l * ll - ll - 1.0;
                return delta_ * l * ll + slope * (u - delta_);
            }
            case Kind::Custom:
                return custom_(u);
        }
        return 0.0;
    }

    // Smallest grid-certified β with Ψ(u) <= β(1+u) on a log-spaced grid of
    // [0, 1e6], inflated by 5%.
    double beta() const {
        double worst = 0.0;
        worst = std::max(worst, (*this)(0.0));
        const int n = 4000;
        const double lo = std::log(1e-12), hi = std::log(1e6);
        for (int i = 0; i <= n; ++i) {
            const double u = std::exp(lo + (hi - lo) * i / n);
            worst = std::max(worst, (*this)(u) / (1.0 + u));
        }
        return worst * 1.05;
    }

    // Discrete nondecreasing + concavity check on [lo, hi].
    bool shape_ok(int grid_n = 1000, double lo = 0.0, double hi = 4.0) const {
        std::vector<double> v(grid_n + 1);
        for (int i = 0; i <= grid_n; ++i)
            v[i] = (*this)(lo + (hi - lo) * i / grid_n);
        if (v.front() < 0.0) return false;
        for (int i = 1; i <= grid_n; ++i)
            if (v[i] - v[i - 1] < -1e-12) return false;
        for (int i = 1; i < grid_n; ++i)
            if ((v[i + 1] - v[i]) - (v[i] - v[i - 1]) > 1e-12) return false;
        return true;
    }

    // ∫_lower^upper du / Ψ(u); grows without bound as lower → 0 exactly when
    // the Osgood condition holds.
    double osgood_integral(double lower, double upper = 1.0) const {
        if (!(lower > 0.0) || !(upper >= lower))
            throw contract_error("osgood_integral: need 0 < lower <= upper");
        return quad::integrate_geometric(
            [&](double u) { return 1.0 / (*this)(u); }, lower, upper, 32);
    }

  private:
    static double check_delta(double d) {
        if (!(d > 0.0 && d < 1.0))
            throw contract_error("Modulus: delta must lie in (0, 1)");
        return d;
    }

    Kind kind_ = Kind::Linear;
    double gamma_ = 1.0;
    double delta_ = 0.5;
    std::function<double(double)> custom_;
    std::string name_;
};

using DriftFn =
    std::function<Eigen::VectorXd(double, const Eigen::VectorXd&, const EmpiricalMeasure&)>;
using DiffusionFn =
    std::function<Eigen::MatrixXd(double, const Eigen::VectorXd&, const EmpiricalMeasure&)>;
using JumpFn = std::function<Eigen::VectorXd(double, const Eigen::VectorXd&,
                                             const EmpiricalMeasure&,
                                             const Eigen::VectorXd&)>;
using CompensatorFn =
    std::function<Eigen::VectorXd(double, const Eigen::VectorXd&, const EmpiricalMeasure&)>;

// The coefficient triple (F, G, J) with its certification data: the bound
// function K(t), the modulus Ψ, and the √q_i weights realizing the
// Hilbert-Schmidt norm of G as ‖G diag(√q)‖_F.  Callables must be pure and
// reentrant; the solver invokes them concurrently.
struct CoefficientSet {
    int dim = 0;
    int k_dim = 0;
    DriftFn F;
    DiffusionFn G;
    JumpFn J;
    // ∫_Z J(t, x, μ, z) ν(dz); null means estimate by Monte Carlo over marks.
    CompensatorFn jump_compensator;
    std::function<double(double)> K_bound;
    Modulus modulus = Modulus::linear(1.0);
    Eigen::VectorXd q_sqrt;

    double hs_norm(const Eigen::MatrixXd& g) const {
        if (g.cols() != q_sqrt.size())
            throw contract_error("CoefficientSet: G column count != k_dim");
        return (g * q_sqrt.asDiagonal()).norm();
    }
};

// F = c·mean(μ), G = σ·I, J = j0·z.  Satisfies the growth/continuity
// hypotheses with Ψ = Ψ₁(γ=1) and the analytic K below:
//   ‖F(t,x,μ)-F(t,y,ν)‖² = c²‖mean(μ)-mean(ν)‖² <= c²·W₂(μ,ν)²
//   G, J differences vanish, so K >= c² certifies the first display;
//   the base bound needs K >= σ²·Σq + j0²·∫‖z‖²ν(dz).
inline CoefficientSet make_linear_model(int dim, double c, double sigma, double j0,
                                        const QWienerSpec& qspec, const JumpSpec& jspec) {
    if (qspec.k_dim != dim)
        throw contract_error("make_linear_model: k_dim must equal dim for G = sigma*I");
    if (jspec.mark_dim != dim)
        throw contract_error("make_linear_model: mark_dim must equal dim for J = j0*z");
    CoefficientSet cs;
    cs.dim = dim;
    cs.k_dim = qspec.k_dim;
    cs.q_sqrt = qspec.sqrt_q;
    cs.F = [c](double, const Eigen::VectorXd&, const EmpiricalMeasure& mu) {
        return Eigen::VectorXd(c * mu.mean());
    };
    cs.G = [sigma, dim](double, const Eigen::VectorXd&, const EmpiricalMeasure&) {
        return Eigen::MatrixXd(sigma * Eigen::MatrixXd::Identity(dim, dim));
    };
    cs.J = [j0](double, const Eigen::VectorXd&, const EmpiricalMeasure&,
                const Eigen::VectorXd& z) { return Eigen::VectorXd(j0 * z); };
    const Eigen::VectorXd comp = j0 * jspec.total_intensity * jspec.mark_mean();
    cs.jump_compensator = [comp](double, const Eigen::VectorXd&, const EmpiricalMeasure&) {
        return comp;
    };
    const double k_growth = sigma * sigma * qspec.trace + j0 * j0 * jspec.moment2();
    const double k_const = std::max(c * c, k_growth);
    cs.K_bound = [k_const](double) { return k_const; };
    cs.modulus = Modulus::linear(1.0);
    return cs;
}

// Scale drift by `drift_scale` and the noise coefficients (G, J and the jump
// compensator) by `noise_scale`.
inline CoefficientSet scaled(const CoefficientSet& cs, double drift_scale,
                             double noise_scale) {
    CoefficientSet out = cs;
    out.F = [f = cs.F, drift_scale](double t, const Eigen::VectorXd& x,
                                    const EmpiricalMeasure& mu) {
        return Eigen::VectorXd(drift_scale * f(t, x, mu));
    };
    out.G = [g = cs.G, noise_scale](double t, const Eigen::VectorXd& x,
                                    const EmpiricalMeasure& mu) {
        return Eigen::MatrixXd(noise_scale * g(t, x, mu));
    };
    out.J = [j = cs.J, noise_scale](double t, const Eigen::VectorXd& x,
                                    const EmpiricalMeasure& mu, const Eigen::VectorXd& z) {
        return Eigen::VectorXd(noise_scale * j(t, x, mu, z));
    };
    if (cs.jump_compensator) {
        out.jump_compensator = [comp = cs.jump_compensator, noise_scale](
                                   double t, const Eigen::VectorXd& x,
                                   const EmpiricalMeasure& mu) {
            return Eigen::VectorXd(noise_scale * comp(t, x, mu));
        };
    }
    return out;
}

struct H3Report {
    double worst_ratio = 0.0;       // max LHS/RHS over sampled inputs
    double worst_t = 0.0;
    double degenerate_lhs = 0.0;    // max LHS where x = y, μ = ν (must be ~0)
    double base_bound_ratio = 0.0;  // max of second display LHS / K(t)
    bool pass = false;
};

// Spot check of the continuity hypothesis on random (t, x, y, μ, ν).  Every
// fourth trial uses y = x and ν = μ shifted by a vector, for which the W₂
// distance is met with equality by translation-equivariant coefficients.
inline H3Report check_h3(const CoefficientSet& cs, const JumpSpec& jspec, int trials,
                         std::uint64_t seed, double t_horizon = 1.0, int cloud_size = 8,
                         int mc_marks = 10000, double tolerance = 0.05) {
    if (trials < 1) throw contract_error("check_h3: trials must be >= 1");
    const int d = cs.dim;
    CompensatorMarks marks(jspec, mc_marks, seed ^ 0x5a5aULL);
    const EmpiricalMeasure delta0 = EmpiricalMeasure::dirac_zero(d);
    H3Report rep;

    rng::CounterStream stream(seed, 1, rng::Purpose::Diagnostics);
    const auto random_vec = [&](double scale) {
        Eigen::VectorXd v(d);
        for (int i = 0; i < d; ++i) v(i) = scale * stream.normal();
        return v;
    };
    const auto random_cloud = [&](double spread) {
        std::vector<Eigen::VectorXd> pts;
        pts.reserve(cloud_size);
        const Eigen::VectorXd center = random_vec(1.0);
        for (int i = 0; i < cloud_size; ++i) pts.push_back(center + random_vec(spread));
        return EmpiricalMeasure(std::move(pts));
    };

    const auto lhs_of = [&](double t, const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                            const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
        const double f2 = (cs.F(t, x, mu) - cs.F(t, y, nu)).squaredNorm();
        const double g2 = std::pow(cs.hs_norm(cs.G(t, x, mu) - cs.G(t, y, nu)), 2);
        const double j2 = marks.integrate_scalar([&](const Eigen::VectorXd& z) {
            return (cs.J(t, x, mu, z) - cs.J(t, y, nu, z)).squaredNorm();
        });
        return f2 + g2 + j2;
    };

    for (int trial = 0; trial < trials; ++trial) {
        const double t = stream.uniform(0.0, t_horizon);
        const Eigen::VectorXd x = random_vec(1.0);
        const EmpiricalMeasure mu = random_cloud(0.7);
        Eigen::VectorXd y;
        EmpiricalMeasure nu = mu;
        if (trial % 4 == 1) {
            y = x;
            nu = mu.translated(random_vec(0.8));
        } else if (trial % 4 == 2) {
            y = x;  // degenerate: identical arguments
        } else {
            y = random_vec(1.0);
            nu = random_cloud(0.7);
        }
        const double lhs = lhs_of(t, x, y, mu, nu);
        const double w2 = w2_exact(mu, nu);
        const double arg = (x - y).squaredNorm() + w2 * w2;
        const double rhs = cs.K_bound(t) * cs.modulus(arg);
        if (rhs <= 0.0) {
            rep.degenerate_lhs = std::max(rep.degenerate_lhs, lhs);
        } else if (lhs / rhs > rep.worst_ratio) {
            rep.worst_ratio = lhs / rhs;
            rep.worst_t = t;
        }
    }

    const int t_grid = 64;
    for (int i = 0; i <= t_grid; ++i) {
        const double t = t_horizon * i / t_grid;
        const Eigen::VectorXd zero = Eigen::VectorXd::Zero(d);
        const double base =
            cs.F(t, zero, delta0).squaredNorm() +
            std::pow(cs.hs_norm(cs.G(t, zero, delta0)), 2) +
            marks.integrate_scalar([&](const Eigen::VectorXd& z) {
                return cs.J(t, zero, delta0, z).squaredNorm();
            });
        rep.base_bound_ratio = std::max(rep.base_bound_ratio, base / cs.K_bound(t));
    }

    rep.pass = rep.worst_ratio <= 1.0 + tolerance && rep.degenerate_lhs <= 1e-10 &&
               rep.base_bound_ratio <= 1.0 + tolerance;
    return rep;
}

}  // namespace mvwave
