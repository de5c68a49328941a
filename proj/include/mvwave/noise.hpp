#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <utility>
#include <vector>

#include "mvwave/errors.hpp"
#include "mvwave/rng.hpp"
#include "mvwave/time_grid.hpp"

namespace mvwave {

// Q-Wiener process on R^{k}: independent modes with variances q_i per unit
// time, rotated by an orthogonal basis (identity by default).
struct QWienerSpec {
    int k_dim;
    Eigen::VectorXd q;  // q_i >= 0, Σ q_i = trace(Q) < ∞
    Eigen::MatrixXd basis;

    explicit QWienerSpec(Eigen::VectorXd q_eigenvalues)
        : QWienerSpec(std::move(q_eigenvalues), Eigen::MatrixXd()) {}

    QWienerSpec(Eigen::VectorXd q_eigenvalues, Eigen::MatrixXd v)
        : k_dim(static_cast<int>(q_eigenvalues.size())),
          q(std::move(q_eigenvalues)),
          basis(std::move(v)) {
        if (k_dim < 1) throw contract_error("QWienerSpec: k_dim must be >= 1");
        for (Eigen::Index i = 0; i < q.size(); ++i)
            if (q(i) < 0.0) throw contract_error("QWienerSpec: q eigenvalues must be >= 0");
        if (basis.size() == 0) {
            basis = Eigen::MatrixXd::Identity(k_dim, k_dim);
            trivial_basis_ = true;
        } else {
            if (basis.rows() != k_dim || basis.cols() != k_dim)
                throw contract_error("QWienerSpec: basis must be k_dim x k_dim");
            const double ortho =
                (basis.transpose() * basis - Eigen::MatrixXd::Identity(k_dim, k_dim))
                    .cwiseAbs()
                    .maxCoeff();
            if (ortho > 1e-10) throw contract_error("QWienerSpec: basis not orthogonal");
            trivial_basis_ = basis.isIdentity(0.0);
        }
        sqrt_q = q.cwiseSqrt();
        trace = q.sum();
    }

    Eigen::VectorXd sqrt_q;
    double trace = 0.0;
    bool trivial_basis() const { return trivial_basis_; }

  private:
    bool trivial_basis_ = false;
};

// Finite-intensity jump noise: ν(Z) = λ_tot < ∞, marks on R^m distributed as
// ν/λ_tot, so jumps are simulated exactly (no small-jump truncation).
struct JumpSpec {
    enum class MarkKind { Dirac, Gauss, Uniform };

    int mark_dim;
    MarkKind kind;
    double p1;  // Dirac: z0; Gauss: mean; Uniform: a
    double p2;  // Gauss: stddev; Uniform: b
    double total_intensity;

    JumpSpec(int m, MarkKind k, double a, double b, double lambda_tot)
        : mark_dim(m), kind(k), p1(a), p2(b), total_intensity(lambda_tot) {
        if (mark_dim < 1) throw contract_error("JumpSpec: mark_dim must be >= 1");
        if (!(total_intensity > 0.0) || !std::isfinite(total_intensity))
            throw contract_error("JumpSpec: total intensity must be finite and > 0");
        if (kind == MarkKind::Gauss && p2 < 0.0)
            throw contract_error("JumpSpec: gauss stddev must be >= 0");
        if (kind == MarkKind::Uniform && !(p2 >= p1))
            throw contract_error("JumpSpec: uniform needs a <= b");
    }

    static JumpSpec dirac(int m, double z0, double lambda_tot) {
        return JumpSpec(m, MarkKind::Dirac, z0, 0.0, lambda_tot);
    }
    static JumpSpec gauss(int m, double mean, double stddev, double lambda_tot) {
        return JumpSpec(m, MarkKind::Gauss, mean, stddev, lambda_tot);
    }
    static JumpSpec uniform(int m, double a, double b, double lambda_tot) {
        return JumpSpec(m, MarkKind::Uniform, a, b, lambda_tot);
    }

    // Marks are i.i.d. per coordinate with the named scalar law.
    Eigen::VectorXd sample_mark(rng::CounterStream& stream) const {
        Eigen::VectorXd z(mark_dim);
        for (int i = 0; i < mark_dim; ++i) {
            switch (kind) {
                case MarkKind::Dirac: z(i) = p1; break;
                case MarkKind::Gauss: z(i) = stream.normal(p1, p2); break;
                case MarkKind::Uniform: z(i) = stream.uniform(p1, p2); break;
            }
        }
        return z;
    }

    Eigen::VectorXd mark_mean() const {
        double m = 0.0;
        switch (kind) {
            case MarkKind::Dirac: m = p1; break;
            case MarkKind::Gauss: m = p1; break;
            case MarkKind::Uniform: m = 0.5 * (p1 + p2); break;
        }
        return Eigen::VectorXd::Constant(mark_dim, m);
    }

    // E‖z‖² under ν/λ_tot.
    double mark_second_moment() const {
        double per_coord = 0.0;
        switch (kind) {
            case MarkKind::Dirac: per_coord = p1 * p1; break;
            case MarkKind::Gauss: per_coord = p1 * p1 + p2 * p2; break;
            case MarkKind::Uniform:
                per_coord = (p1 * p1 + p1 * p2 + p2 * p2) / 3.0;
                break;
        }
        return mark_dim * per_coord;
    }

    // ∫_Z ‖z‖² ν(dz); recorded for the oracles that need it.
    double moment2() const { return total_intensity * mark_second_moment(); }
};

// One particle's noise over a grid: Wiener increments per step plus the jump
// times/marks on [0, T].  A pure function of (master seed, particle index).
struct NoisePath {
    TimeGrid grid;
    Eigen::MatrixXd wiener;  // n_steps x k_dim, row j = ΔW over [t_j, t_{j+1}]
    std::vector<double> jump_times;           // sorted, in (0, T]
    std::vector<Eigen::VectorXd> jump_marks;  // aligned with jump_times
    std::uint64_t master_seed = 0;
    std::uint64_t particle = 0;

    explicit NoisePath(const TimeGrid& g) : grid(g) {}

    // Step index whose summand window (t_j, t_{j+1}] contains τ.
    int step_of(double tau) const {
        int j = static_cast<int>(std::ceil(tau / grid.h)) - 1;
        return std::clamp(j, 0, grid.n_steps - 1);
    }
};

// Gaussian increments, mode i with variance q_i·h; deterministic per stream.
inline Eigen::MatrixXd sample_wiener(const QWienerSpec& spec, const TimeGrid& grid,
                                     rng::CounterStream& stream) {
    Eigen::MatrixXd dw(grid.n_steps, spec.k_dim);
    const double sqrt_h = std::sqrt(grid.h);
    for (int j = 0; j < grid.n_steps; ++j)
        for (int i = 0; i < spec.k_dim; ++i)
            dw(j, i) = spec.sqrt_q(i) * sqrt_h * stream.normal();
    if (!spec.trivial_basis()) dw = dw * spec.basis.transpose();
    return dw;
}

// Jump count ~ Poisson(λ_tot·T), times i.i.d. uniform on [0, T] sorted, marks
// i.i.d. from ν/λ_tot.
inline std::pair<std::vector<double>, std::vector<Eigen::VectorXd>> sample_jumps(
    const JumpSpec& spec, double horizon, rng::CounterStream& count_stream,
    rng::CounterStream& time_stream, rng::CounterStream& mark_stream) {
    if (horizon < 0.0) throw contract_error("sample_jumps: horizon must be >= 0");
    const std::uint64_t count =
        horizon == 0.0 ? 0 : count_stream.poisson(spec.total_intensity * horizon);
    std::vector<double> times(count);
    for (auto& t : times) t = time_stream.uniform01() * horizon;
    std::sort(times.begin(), times.end());
    std::vector<Eigen::VectorXd> marks;
    marks.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) marks.push_back(spec.sample_mark(mark_stream));
    return {std::move(times), std::move(marks)};
}

inline NoisePath sample_noise_path(const QWienerSpec& qspec, const JumpSpec* jspec,
                                   const TimeGrid& grid, std::uint64_t master_seed,
                                   std::uint64_t particle) {
    NoisePath path(grid);
    path.master_seed = master_seed;
    path.particle = particle;
    rng::CounterStream wiener_stream(master_seed, particle, rng::Purpose::WienerIncrements);
    path.wiener = sample_wiener(qspec, grid, wiener_stream);
    if (jspec != nullptr) {
        rng::CounterStream cs(master_seed, particle, rng::Purpose::JumpCount);
        rng::CounterStream ts(master_seed, particle, rng::Purpose::JumpTimes);
        rng::CounterStream ms(master_seed, particle, rng::Purpose::JumpMarks);
        auto [times, marks] = sample_jumps(*jspec, grid.horizon, cs, ts, ms);
        path.jump_times = std::move(times);
        path.jump_marks = std::move(marks);
    }
    return path;
}

// Sample cache for Monte Carlo compensator integrals ∫_Z f(s, z) ν(dz).
class CompensatorMarks {
  public:
    CompensatorMarks(const JumpSpec& spec, int n_samples, std::uint64_t seed)
        : intensity_(spec.total_intensity) {
        if (n_samples < 1) throw contract_error("CompensatorMarks: need >= 1 sample");
        rng::CounterStream stream(seed, 0, rng::Purpose::CompensatorMarks);
        marks_.reserve(n_samples);
        for (int i = 0; i < n_samples; ++i) marks_.push_back(spec.sample_mark(stream));
    }

    // λ_tot · mean over cached marks of f(z).
    template <class F>
    Eigen::VectorXd integrate(F&& f) const {
        Eigen::VectorXd acc = f(marks_.front());
        for (std::size_t i = 1; i < marks_.size(); ++i) acc += f(marks_[i]);
        return acc * (intensity_ / static_cast<double>(marks_.size()));
    }

    template <class F>
    double integrate_scalar(F&& f) const {
        double acc = 0.0;
        for (const auto& z : marks_) acc += f(z);
        return acc * (intensity_ / static_cast<double>(marks_.size()));
    }

    const std::vector<Eigen::VectorXd>& marks() const { return marks_; }

  private:
    double intensity_;
    std::vector<Eigen::VectorXd> marks_;
};

// Per-step contributions of ∫∫ f dÑ = Σ_{jumps} f(τ, z) − ∫ ν-compensator ds.
// `closed_form_compensator`, when given, must return ∫_Z f(s, z) ν(dz);
// otherwise the integral is estimated with the cached marks at the step's
// left node.
inline std::vector<Eigen::VectorXd> compensated_integral(
    const NoisePath& path,
    const std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>& integrand,
    const std::function<Eigen::VectorXd(double)>& closed_form_compensator = nullptr,
    const CompensatorMarks* marks = nullptr) {
    if (!closed_form_compensator && marks == nullptr)
        throw contract_error(
            "compensated_integral: need a closed-form compensator or cached marks");
    const auto& grid = path.grid;
    // probe output dimension
    Eigen::VectorXd probe;
    if (!path.jump_marks.empty()) {
        probe = integrand(0.0, path.jump_marks.front());
    } else if (marks != nullptr) {
        probe = integrand(0.0, marks->marks().front());
    } else {
        probe = closed_form_compensator(0.0);
    }
    std::vector<Eigen::VectorXd> out(grid.n_steps, Eigen::VectorXd::Zero(probe.size()));
    for (std::size_t k = 0; k < path.jump_times.size(); ++k) {
        const double tau = path.jump_times[k];
        out[path.step_of(tau)] += integrand(tau, path.jump_marks[k]);
    }
    for (int j = 0; j < grid.n_steps; ++j) {
        const double s = grid.node(j);
        Eigen::VectorXd comp;
        if (closed_form_compensator) {
            comp = closed_form_compensator(s);
        } else {
            comp = marks->integrate([&](const Eigen::VectorXd& z) { return integrand(s, z); });
        }
        out[j] -= grid.h * comp;
    }
    return out;
}

struct KunitaCheck {
    double lhs;  // E sup_{s<=T} ‖∫₀^s ∫ J dÑ‖²
    double rhs;  // 4 ∫₀^T ∫ E‖J‖² ν(dz) dt  (Doob constant for p = 2)
    bool holds;
};

// Monte Carlo check of the p = 2 maximal inequality for a step-constant-in-s
// integrand J(s, z).
inline KunitaCheck kunita_p2_check(
    const QWienerSpec& qspec, const JumpSpec& jspec, const TimeGrid& grid,
    const std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>& integrand,
    int replicas, std::uint64_t seed, int compensator_mc = 10000) {
    if (replicas < 1) throw contract_error("kunita_p2_check: replicas must be >= 1");
    CompensatorMarks marks(jspec, compensator_mc, seed ^ 0xc0ffeeULL);
    double acc_sup = 0.0;
    for (int r = 0; r < replicas; ++r) {
        const NoisePath path = sample_noise_path(qspec, &jspec, grid, seed, r);
        const auto steps = compensated_integral(path, integrand, nullptr, &marks);
        Eigen::VectorXd partial = Eigen::VectorXd::Zero(steps.front().size());
        double sup2 = 0.0;
        for (const auto& c : steps) {
            partial += c;
            sup2 = std::max(sup2, partial.squaredNorm());
        }
        acc_sup += sup2;
    }
    const double lhs = acc_sup / replicas;
    double rhs = 0.0;
    for (int j = 0; j < grid.n_steps; ++j) {
        const double s = grid.node(j);
        rhs += grid.h * marks.integrate_scalar([&](const Eigen::VectorXd& z) {
            return integrand(s, z).squaredNorm();
        });
    }
    rhs *= 4.0;
    return {lhs, rhs, lhs <= rhs};
}

}  // namespace mvwave
