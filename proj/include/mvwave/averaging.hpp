#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "mvwave/coefficients.hpp"
#include "mvwave/errors.hpp"
#include "mvwave/measure.hpp"
#include "mvwave/quadrature.hpp"
#include "mvwave/solver.hpp"
#include "mvwave/stats.hpp"

namespace mvwave {

/*
 * Averaging experiment: the ε-scaled system
 *
 *   X^ε: drift ε F(t,·,·), diffusion √ε G(t,·,·), jumps √ε J(t,·,·,z)
 *
 * against the autonomous averaged system (F̄, Ḡ, J̄) with the same scaling,
 * coupled through common noise, measured as E sup_{t ≤ L ε^{-α}} ‖X^ε − Z^ε‖²
 * over an ε-sweep with a fitted log-log slope.
 */

struct AveragedCoefficients {
    int dim = 0;
    int k_dim = 0;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&, const EmpiricalMeasure&)> F;
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&, const EmpiricalMeasure&)> G;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&, const EmpiricalMeasure&,
                                  const Eigen::VectorXd&)>
        J;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&, const EmpiricalMeasure&)>
        jump_compensator;
    // time-averaged deviation envelopes, one per coefficient; decay to 0
    std::function<double(double)> phi1, phi2, phi3;
    Modulus psi = Modulus::linear(1.0);
    std::function<double(double)> K_bound;
    Eigen::VectorXd q_sqrt;

    // Lift to the time-dependent coefficient interface.
    CoefficientSet as_coefficient_set() const {
        CoefficientSet cs;
        cs.dim = dim;
        cs.k_dim = k_dim;
        cs.F = [f = F](double, const Eigen::VectorXd& x, const EmpiricalMeasure& mu) {
            return f(x, mu);
        };
        cs.G = [g = G](double, const Eigen::VectorXd& x, const EmpiricalMeasure& mu) {
            return g(x, mu);
        };
        cs.J = [j = J](double, const Eigen::VectorXd& x, const EmpiricalMeasure& mu,
                       const Eigen::VectorXd& z) { return j(x, mu, z); };
        if (jump_compensator) {
            cs.jump_compensator = [c = jump_compensator](double, const Eigen::VectorXd& x,
                                                         const EmpiricalMeasure& mu) {
                return c(x, mu);
            };
        }
        cs.K_bound = K_bound;
        cs.modulus = psi;
        cs.q_sqrt = q_sqrt;
        return cs;
    }
};

struct DecayModel {
    CoefficientSet standard;
    AveragedCoefficients averaged;
};

// Built-in averaging pair with exponentially decaying time dependence:
//
//   F(t,x,μ) = (1+e^{-t}) x + c mean(μ)        F̄(x,μ) = x + c mean(μ)
//   G(t,x,μ) = σ (1+e^{-t}/2) diag(x)          Ḡ(x,μ) = σ diag(x)
//   J(t,x,μ,z) = j0 z                          J̄ = J
//
// The time-fluctuating parts vanish at (ξ, μ) = (0, δ₀), so the averaging
// hypothesis holds with ψ(u) = u and the closed-form envelopes
//   φ₁(T₁) = (1-e^{-2T₁})/(2T₁),  φ₂ = (σ² max q / 4) φ₁,  φ₃ = φ₁.
inline DecayModel make_decay_model(int dim, double c, double sigma, double j0,
                                   const QWienerSpec& qspec, const JumpSpec& jspec) {
    if (qspec.k_dim != dim)
        throw contract_error("make_decay_model: k_dim must equal dim for diagonal G");
    if (jspec.mark_dim != dim)
        throw contract_error("make_decay_model: mark_dim must equal dim for J = j0*z");
    const double q_max = qspec.q.maxCoeff();
    const double k_const = std::max({8.0 + 2.25 * sigma * sigma * q_max, 2.0 * c * c,
                                     j0 * j0 * jspec.moment2()});
    const Eigen::VectorXd comp = j0 * jspec.total_intensity * jspec.mark_mean();

    DecayModel m;
    m.standard.dim = dim;
    m.standard.k_dim = dim;
    m.standard.q_sqrt = qspec.sqrt_q;
    m.standard.F = [c](double t, const Eigen::VectorXd& x, const EmpiricalMeasure& mu) {
        return Eigen::VectorXd((1.0 + std::exp(-t)) * x + c * mu.mean());
    };
    m.standard.G = [sigma](double t, const Eigen::VectorXd& x, const EmpiricalMeasure&) {
        return Eigen::MatrixXd(
            (sigma * (1.0 + 0.5 * std::exp(-t)) * x).asDiagonal());
    };
    m.standard.J = [j0](double, const Eigen::VectorXd&, const EmpiricalMeasure&,
                        const Eigen::VectorXd& z) { return Eigen::VectorXd(j0 * z); };
    m.standard.jump_compensator = [comp](double, const Eigen::VectorXd&,
                                         const EmpiricalMeasure&) { return comp; };
    m.standard.K_bound = [k_const](double) { return k_const; };
    m.standard.modulus = Modulus::linear(1.0);

    m.averaged.dim = dim;
    m.averaged.k_dim = dim;
    m.averaged.q_sqrt = qspec.sqrt_q;
    m.averaged.F = [c](const Eigen::VectorXd& x, const EmpiricalMeasure& mu) {
        return Eigen::VectorXd(x + c * mu.mean());
    };
    m.averaged.G = [sigma](const Eigen::VectorXd& x, const EmpiricalMeasure&) {
        return Eigen::MatrixXd((sigma * x).asDiagonal());
    };
    m.averaged.J = [j0](const Eigen::VectorXd&, const EmpiricalMeasure&,
                        const Eigen::VectorXd& z) { return Eigen::VectorXd(j0 * z); };
    m.averaged.jump_compensator = [comp](const Eigen::VectorXd&, const EmpiricalMeasure&) {
        return comp;
    };
    const auto phi_base = [](double t1) {
        return t1 <= 0.0 ? 1.0 : (1.0 - std::exp(-2.0 * t1)) / (2.0 * t1);
    };
    m.averaged.phi1 = phi_base;
    m.averaged.phi2 = [phi_base, sigma, q_max](double t1) {
        return 0.25 * sigma * sigma * q_max * phi_base(t1);
    };
    m.averaged.phi3 = phi_base;
    m.averaged.psi = Modulus::linear(1.0);
    m.averaged.K_bound = [k_const](double) { return k_const; };
    return m;
}

namespace detail {

// (1/T₁) ∫_0^{T₁} f; geometric panels handle smooth decaying integrands on
// long horizons without losing the region near zero.
template <class F>
double time_average(F&& f, double t1) {
    if (!(t1 > 0.0)) throw contract_error("time_average: T1 must be > 0");
    const double split = std::min(t1, 1e-4);
    double acc = quad::integrate(f, 0.0, split, 16);
    if (t1 > split) acc += quad::integrate_geometric(f, split, t1, 32);
    return acc / t1;
}

}  // namespace detail

struct H4Report {
    std::vector<double> t1_list;
    // per hypothesis (drift, diffusion, jump): max ratio over samples, per T1
    std::array<std::vector<double>, 3> max_ratio;
    std::array<std::vector<double>, 3> phi;
    bool ratios_ok = false;
    bool envelope_ok = false;
    bool pass = false;
};

// Quadrature check of the time-averaged deviation bounds on random (ξ, μ);
// every third sample uses μ = δ₀, where the built-in model meets the drift
// bound with equality.
inline H4Report check_h4(const CoefficientSet& cs, const AveragedCoefficients& avg,
                         const JumpSpec& jspec, const std::vector<double>& t1_list,
                         int samples, std::uint64_t seed, double tolerance = 1e-9,
                         int mc_marks = 4000) {
    if (t1_list.empty()) throw contract_error("check_h4: empty T1 list");
    for (std::size_t i = 1; i < t1_list.size(); ++i)
        if (!(t1_list[i] > t1_list[i - 1]))
            throw contract_error("check_h4: T1 list must increase");
    if (samples < 1) throw contract_error("check_h4: samples must be >= 1");
    const int d = cs.dim;
    CompensatorMarks marks(jspec, mc_marks, seed ^ 0x44aULL);

    H4Report rep;
    rep.t1_list = t1_list;
    for (int i = 0; i < 3; ++i) {
        rep.max_ratio[i].assign(t1_list.size(), 0.0);
        rep.phi[i].resize(t1_list.size());
    }
    for (std::size_t ti = 0; ti < t1_list.size(); ++ti) {
        rep.phi[0][ti] = avg.phi1(t1_list[ti]);
        rep.phi[1][ti] = avg.phi2(t1_list[ti]);
        rep.phi[2][ti] = avg.phi3(t1_list[ti]);
    }

    rng::CounterStream stream(seed, 2, rng::Purpose::Diagnostics);
    for (int s = 0; s < samples; ++s) {
        Eigen::VectorXd xi(d);
        for (int i = 0; i < d; ++i) xi(i) = stream.normal();
        EmpiricalMeasure mu = EmpiricalMeasure::dirac_zero(d);
        if (s % 3 != 0) {
            std::vector<Eigen::VectorXd> pts;
            for (int p = 0; p < 6; ++p) {
                Eigen::VectorXd v(d);
                for (int i = 0; i < d; ++i) v(i) = stream.normal();
                pts.push_back(v);
            }
            mu = EmpiricalMeasure(std::move(pts));
        }
        const double arg = xi.squaredNorm() + w2_to_dirac0_squared(mu);
        const double psi_val = avg.psi(arg);
        if (psi_val <= 0.0) continue;

        const Eigen::VectorXd fbar = avg.F(xi, mu);
        const Eigen::MatrixXd gbar = avg.G(xi, mu);
        for (std::size_t ti = 0; ti < t1_list.size(); ++ti) {
            const double t1 = t1_list[ti];
            const double f_avg = detail::time_average(
                [&](double t) { return (cs.F(t, xi, mu) - fbar).squaredNorm(); }, t1);
            const double g_avg = detail::time_average(
                [&](double t) {
                    const double hs = cs.hs_norm(cs.G(t, xi, mu) - gbar);
                    return hs * hs;
                },
                t1);
            const double j_avg = detail::time_average(
                [&](double t) {
                    return marks.integrate_scalar([&](const Eigen::VectorXd& z) {
                        return (cs.J(t, xi, mu, z) - avg.J(xi, mu, z)).squaredNorm();
                    });
                },
                t1);
            rep.max_ratio[0][ti] =
                std::max(rep.max_ratio[0][ti], f_avg / (rep.phi[0][ti] * psi_val));
            rep.max_ratio[1][ti] =
                std::max(rep.max_ratio[1][ti], g_avg / (rep.phi[1][ti] * psi_val));
            rep.max_ratio[2][ti] =
                std::max(rep.max_ratio[2][ti], j_avg / (rep.phi[2][ti] * psi_val));
        }
    }

    rep.ratios_ok = true;
    for (const auto& row : rep.max_ratio)
        for (double r : row) rep.ratios_ok = rep.ratios_ok && r <= 1.0 + tolerance;
    rep.envelope_ok = true;
    for (const auto& row : rep.phi)
        for (std::size_t i = 1; i < row.size(); ++i)
            rep.envelope_ok = rep.envelope_ok && row[i] < row[i - 1];
    rep.pass = rep.ratios_ok && rep.envelope_ok;
    return rep;
}

// Drift scaled by ε, diffusion and jumps by √ε.
inline ParticleEnsemble solve_standard(const CoefficientSet& cs, const CosineFamily& fam,
                                       const QWienerSpec& qspec, const JumpSpec* jspec,
                                       const InitialData& init, const SolveConfig& cfg,
                                       double eps) {
    if (eps < 0.0 || eps > 1.0)
        throw contract_error("solve_standard: eps must lie in [0, 1]");
    const CoefficientSet sc = scaled(cs, eps, std::sqrt(eps));
    return solve_euler_mild(sc, fam, qspec, jspec, init, cfg);
}

inline ParticleEnsemble solve_averaged(const AveragedCoefficients& avg,
                                       const CosineFamily& fam, const QWienerSpec& qspec,
                                       const JumpSpec* jspec, const InitialData& init,
                                       const SolveConfig& cfg, double eps) {
    if (eps < 0.0 || eps > 1.0)
        throw contract_error("solve_averaged: eps must lie in [0, 1]");
    const CoefficientSet sc = scaled(avg.as_coefficient_set(), eps, std::sqrt(eps));
    return solve_euler_mild(sc, fam, qspec, jspec, init, cfg);
}

struct AveragingReport {
    std::vector<double> eps;
    std::vector<double> horizon;   // L ε^{-α}
    std::vector<double> error;     // E_ε
    std::vector<double> ci_lo;
    std::vector<double> ci_hi;
    double alpha = 0.5;
    double L = 0.0;
    double slope = 0.0;
    double slope_ci_lo = 0.0;
    double slope_ci_hi = 0.0;
    bool slope_defined = false;
    bool monotone_pass = false;  // E_ε decreasing in ε at 95% on paired gaps
    bool slope_pass = false;     // slope >= 0.5
    bool all_zero = false;       // identical dynamics under coupled noise
};

// Default L puts the longest horizon (at the smallest ε) at half the grid.
inline double default_sweep_length(const TimeGrid& grid, const std::vector<double>& eps,
                                   double alpha) {
    double eps_min = eps.front();
    for (double e : eps) eps_min = std::min(eps_min, e);
    return 0.5 * grid.horizon * std::pow(eps_min, alpha);
}

inline AveragingReport averaging_sweep(const CoefficientSet& cs,
                                       const AveragedCoefficients& avg,
                                       const CosineFamily& fam, const QWienerSpec& qspec,
                                       const JumpSpec* jspec, const InitialData& init,
                                       const SolveConfig& cfg,
                                       const std::vector<double>& eps_list, double alpha,
                                       double sweep_length = -1.0, int bootstrap_reps = 500) {
    if (eps_list.size() < 2)
        throw contract_error("averaging_sweep: need at least two eps values");
    for (std::size_t i = 0; i < eps_list.size(); ++i) {
        if (!(eps_list[i] > 0.0 && eps_list[i] <= 1.0))
            throw contract_error("averaging_sweep: eps must lie in (0, 1]");
        if (i > 0 && !(eps_list[i] < eps_list[i - 1]))
            throw contract_error("averaging_sweep: eps list must strictly decrease");
    }
    if (!(alpha > 0.0 && alpha < 1.0))
        throw contract_error("averaging_sweep: alpha must lie in (0, 1)");

    AveragingReport rep;
    rep.eps = eps_list;
    rep.alpha = alpha;
    rep.L = sweep_length > 0.0 ? sweep_length
                               : default_sweep_length(cfg.grid, eps_list, alpha);
    for (double e : eps_list) {
        const double horizon = rep.L * std::pow(e, -alpha);
        if (horizon > cfg.grid.horizon * (1.0 + 1e-12))
            throw config_error("averaging_sweep: horizon " + std::to_string(horizon) +
                               " at eps " + std::to_string(e) +
                               " overflows the grid horizon");
        rep.horizon.push_back(horizon);
    }

    const int n_eps = static_cast<int>(eps_list.size());
    const int N = cfg.n_particles;
    std::vector<std::vector<double>> sup(n_eps);
    for (int i = 0; i < n_eps; ++i) {
        const auto std_ens =
            solve_standard(cs, fam, qspec, jspec, init, cfg, eps_list[i]);
        const auto avg_ens =
            solve_averaged(avg, fam, qspec, jspec, init, cfg, eps_list[i]);
        const int up_to = std::min(
            cfg.grid.n_steps,
            static_cast<int>(std::floor(rep.horizon[i] / cfg.grid.h + 1e-9)));
        sup[i] = sup_sq_diff_per_particle(std_ens, avg_ens, up_to);
        const auto ci = stats::bootstrap_mean_ci(sup[i], bootstrap_reps,
                                                 cfg.master_seed ^ (0x51ULL + i));
        rep.error.push_back(ci.estimate);
        rep.ci_lo.push_back(ci.lo);
        rep.ci_hi.push_back(ci.hi);
    }

    rep.all_zero = true;
    for (double e : rep.error) rep.all_zero = rep.all_zero && e == 0.0;

    // paired one-sided gap test between consecutive ε (common random numbers)
    rep.monotone_pass = true;
    for (int i = 0; i + 1 < n_eps; ++i) {
        std::vector<double> diff(N);
        for (int p = 0; p < N; ++p) diff[p] = sup[i + 1][p] - sup[i][p];
        const double m = stats::mean(diff);
        double se = 0.0;
        if (N > 1) se = std::sqrt(stats::variance(diff) / N);
        const bool decreasing = se > 0.0 ? m + 1.645 * se < 0.0 : m < 0.0;
        rep.monotone_pass = rep.monotone_pass && decreasing;
    }

    bool positive = true;
    for (double e : rep.error) positive = positive && e > 0.0;
    if (positive) {
        std::vector<double> lx(n_eps), ly(n_eps);
        for (int i = 0; i < n_eps; ++i) {
            lx[i] = std::log(eps_list[i]);
            ly[i] = std::log(rep.error[i]);
        }
        rep.slope = stats::ols_slope(lx, ly);
        rep.slope_defined = true;
        // paired bootstrap over particles, refitting the whole line
        rng::CounterStream bs(cfg.master_seed ^ 0xb007ULL, 0, rng::Purpose::Bootstrap);
        std::vector<double> slopes;
        slopes.reserve(bootstrap_reps);
        std::vector<double> by(n_eps);
        for (int r = 0; r < bootstrap_reps; ++r) {
            std::fill(by.begin(), by.end(), 0.0);
            bool ok = true;
            for (int p = 0; p < N; ++p) {
                const std::size_t idx = bs.next_u64() % N;
                for (int i = 0; i < n_eps; ++i) by[i] += sup[i][idx];
            }
            std::vector<double> lyr(n_eps);
            for (int i = 0; i < n_eps; ++i) {
                if (by[i] <= 0.0) {
                    ok = false;
                    break;
                }
                lyr[i] = std::log(by[i] / N);
            }
            if (ok) slopes.push_back(stats::ols_slope(lx, lyr));
        }
        if (!slopes.empty()) {
            std::sort(slopes.begin(), slopes.end());
            rep.slope_ci_lo = slopes[static_cast<std::size_t>(0.025 * (slopes.size() - 1))];
            rep.slope_ci_hi = slopes[static_cast<std::size_t>(0.975 * (slopes.size() - 1))];
        }
        rep.slope_pass = rep.slope >= 0.5;
    }
    return rep;
}

}  // namespace mvwave
