#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mvwave/coefficients.hpp"
#include "mvwave/cosine_family.hpp"
#include "mvwave/errors.hpp"
#include "mvwave/measure.hpp"
#include "mvwave/noise.hpp"
#include "mvwave/parallel.hpp"
#include "mvwave/rng.hpp"
#include "mvwave/time_grid.hpp"

namespace mvwave {

/*
 * Particle solvers for the mild form
 *
 *   X(t_m) = S(t_m)X₁ + [C(t_m) − S(t_m)B]X₀
 *          + Σ_{j<m} C(t_m−t_j) B X(t_j) h
 *          + Σ_{j<m} S(t_m−t_j) [F_j h + G_j ΔW_j − h ∫_Z J_j ν(dz)]
 *          + Σ_{τ≤t_m} S(t_m−τ) J(τ, ·, ·, z_τ),
 *
 * with coefficients evaluated at the left node (predictable arguments) and
 * the ensemble's empirical law standing in for the state distribution.  The
 * delayed scheme evaluates every coefficient argument at t_j − 1/k instead,
 * with the state frozen at X₀ on [−1, 0]; its delay must be grid-aligned.
 *
 * The convolutions are full sums at every output node, O(n²) per particle.
 * All operators act diagonally in the generator's eigenbasis, so each summand
 * is stored in eigencoordinates once and the inner loop is scalar work
 * against precomputed cos/sin tables.
 *
 * Determinism: paths are a pure function of (config, master seed).  Particle
 * slots are written by at most one thread and reductions run serially in
 * index order, so results are bit-identical for any thread count.
 */

enum class Scheme { EulerMild, Caratheodory, Picard };

struct InitialData {
    Eigen::VectorXd x0_mean;
    Eigen::VectorXd x1_mean;
    double x0_std = 0.0;
    double x1_std = 0.0;

    static InitialData deterministic(Eigen::VectorXd x0, Eigen::VectorXd x1) {
        return {std::move(x0), std::move(x1), 0.0, 0.0};
    }
};

struct SolveConfig {
    TimeGrid grid;
    int n_particles = 1;
    std::uint64_t master_seed = 0;
    Scheme scheme = Scheme::EulerMild;
    int caratheodory_k = 0;  // delayed scheme index; 0 = homogeneous first line
    int picard_iters = 1;
    int threads = 1;
    double divergence_guard = 1e12;
    int compensator_mc = 10000;
    W2Mode w2_mode = W2Mode::Exact;

    explicit SolveConfig(const TimeGrid& g) : grid(g) {}
};

struct ParticleEnsemble {
    TimeGrid grid;
    int dim = 0;
    std::vector<Eigen::MatrixXd> nodes;  // nodes[j] is dim x N, column = particle

    explicit ParticleEnsemble(const TimeGrid& g) : grid(g) {}

    int n_particles() const {
        return nodes.empty() ? 0 : static_cast<int>(nodes.front().cols());
    }

    Eigen::VectorXd state(int particle, int node) const {
        return nodes[node].col(particle);
    }

    EmpiricalMeasure law_at(int node) const {
        return EmpiricalMeasure::from_columns(nodes[node]);
    }

    Eigen::VectorXd mean_at(int node) const { return nodes[node].rowwise().mean(); }

    double second_moment_at(int node) const {
        return nodes[node].colwise().squaredNorm().mean();
    }

    // max over nodes j <= up_to of ‖X_i(t_j)‖², per particle
    std::vector<double> sup_sq_per_particle(int up_to = -1) const {
        const int last = up_to < 0 ? static_cast<int>(nodes.size()) - 1 : up_to;
        std::vector<double> out(n_particles(), 0.0);
        for (int j = 0; j <= last; ++j)
            for (int i = 0; i < n_particles(); ++i)
                out[i] = std::max(out[i], nodes[j].col(i).squaredNorm());
        return out;
    }

    double e_sup_sq(int up_to = -1) const {
        const auto per = sup_sq_per_particle(up_to);
        double acc = 0.0;
        for (double v : per) acc += v;
        return acc / static_cast<double>(per.size());
    }
};

// max over nodes j <= up_to of ‖X_i(t_j) − Y_i(t_j)‖², per particle (coupled runs)
inline std::vector<double> sup_sq_diff_per_particle(const ParticleEnsemble& a,
                                                    const ParticleEnsemble& b,
                                                    int up_to = -1) {
    if (a.nodes.size() != b.nodes.size() || a.n_particles() != b.n_particles())
        throw contract_error("sup_sq_diff_per_particle: ensembles not comparable");
    const int last = up_to < 0 ? static_cast<int>(a.nodes.size()) - 1 : up_to;
    std::vector<double> out(a.n_particles(), 0.0);
    for (int j = 0; j <= last; ++j)
        for (int i = 0; i < a.n_particles(); ++i)
            out[i] = std::max(out[i], (a.nodes[j].col(i) - b.nodes[j].col(i)).squaredNorm());
    return out;
}

namespace detail {

class MildSolver {
  public:
    MildSolver(const CoefficientSet& cs, const CosineFamily& fam, const QWienerSpec& qspec,
               const JumpSpec* jspec, const InitialData& init, const SolveConfig& cfg)
        : cs_(cs), fam_(fam), qspec_(qspec), jspec_(jspec), init_(init), cfg_(cfg) {
        d_ = fam.dim();
        n_ = cfg.grid.n_steps;
        N_ = cfg.n_particles;
        if (cs.dim != d_) throw contract_error("solver: coefficient/state dim mismatch");
        if (cs.k_dim != qspec.k_dim)
            throw contract_error("solver: coefficient/noise k_dim mismatch");
        if (init.x0_mean.size() != d_ || init.x1_mean.size() != d_)
            throw contract_error("solver: initial data dimension mismatch");
        if (N_ < 1) throw contract_error("solver: need at least one particle");
        no_damping_ = fam.generator().damping.isZero(0.0);
        trivial_basis_ = fam.generator().trivial_basis();
        prepare();
    }

    ParticleEnsemble run_explicit(int delay_steps) {
        ParticleEnsemble ens = empty_ensemble();
        std::vector<EmpiricalMeasure> laws;
        laws.reserve(n_ + 1);
        assign_initial(ens);
        laws.push_back(ens.law_at(0));

        alloc_summands();
        eval_summands_explicit(0, delay_steps, ens, laws);
        for (int m = 1; m <= n_; ++m) {
            accumulate_nodes(m, ens);
            laws.push_back(ens.law_at(m));
            if (m < n_) eval_summands_explicit(m, delay_steps, ens, laws);
        }
        return ens;
    }

    ParticleEnsemble run_homogeneous() {
        ParticleEnsemble ens = empty_ensemble();
        assign_initial(ens);
        hom_only_ = true;
        for (int m = 1; m <= n_; ++m) accumulate_nodes(m, ens);
        hom_only_ = false;
        return ens;
    }

    struct PicardState {
        ParticleEnsemble ensemble;
        bool diverged = false;
        int iterations_done = 0;
        double last_growth = 0.0;
    };

    PicardState run_picard(int iters) {
        if (iters < 1) throw contract_error("picard: iters must be >= 1");
        PicardState st{run_homogeneous()};
        double prev_scale = std::max(1.0, st.ensemble.e_sup_sq());
        alloc_summands();
        for (int it = 0; it < iters; ++it) {
            std::vector<EmpiricalMeasure> prev_laws;
            prev_laws.reserve(n_ + 1);
            for (int j = 0; j <= n_; ++j) prev_laws.push_back(st.ensemble.law_at(j));
            for (int p = 0; p < N_; ++p) {
                jump_tau_[p].clear();
                jump_term_[p].clear();
            }
            for (int j = 0; j < n_; ++j) eval_summands_from(j, st.ensemble, prev_laws[j]);
            ParticleEnsemble next = empty_ensemble();
            assign_initial(next);
            for (int m = 1; m <= n_; ++m) accumulate_nodes(m, next);
            const double scale = std::max(1.0, next.e_sup_sq());
            st.last_growth = scale / prev_scale;
            st.ensemble = std::move(next);
            st.iterations_done = it + 1;
            if (st.last_growth > 100.0) {  // ×10 growth in norm between iterates
                st.diverged = true;
                break;
            }
            prev_scale = scale;
        }
        return st;
    }

  private:
    void prepare() {
        // trig tables over lags 0..n
        ct_.resize(static_cast<std::size_t>(n_ + 1) * d_);
        st_.resize(static_cast<std::size_t>(n_ + 1) * d_);
        for (int l = 0; l <= n_; ++l) {
            const double t = cfg_.grid.h * l;
            for (int i = 0; i < d_; ++i) {
                ct_[static_cast<std::size_t>(l) * d_ + i] = fam_.cosine_entry(i, t);
                st_[static_cast<std::size_t>(l) * d_ + i] = fam_.sine_entry(i, t);
            }
        }
        // noise and initial data, per particle
        paths_.reserve(N_);
        for (int p = 0; p < N_; ++p)
            paths_.push_back(sample_noise_path(qspec_, jspec_, cfg_.grid,
                                               cfg_.master_seed, p));
        x0_.resize(d_, N_);
        x1_.resize(d_, N_);
        for (int p = 0; p < N_; ++p) {
            rng::CounterStream s0(cfg_.master_seed, p, rng::Purpose::InitialPosition);
            rng::CounterStream s1(cfg_.master_seed, p, rng::Purpose::InitialVelocity);
            for (int i = 0; i < d_; ++i) {
                x0_(i, p) = init_.x0_mean(i) + init_.x0_std * s0.normal();
                x1_(i, p) = init_.x1_mean(i) + init_.x1_std * s1.normal();
            }
        }
        const auto& u = fam_.generator().basis;
        x0e_ = trivial_basis_ ? x0_ : Eigen::MatrixXd(u.transpose() * x0_);
        x1e_ = trivial_basis_ ? x1_ : Eigen::MatrixXd(u.transpose() * x1_);
        if (!no_damping_) {
            const Eigen::MatrixXd bx0 = fam_.generator().damping * x0_;
            bx0e_ = trivial_basis_ ? bx0 : Eigen::MatrixXd(u.transpose() * bx0);
        }
        if (jspec_ != nullptr && !cs_.jump_compensator)
            marks_.emplace(*jspec_, cfg_.compensator_mc, cfg_.master_seed);
    }

    ParticleEnsemble empty_ensemble() const {
        ParticleEnsemble ens(cfg_.grid);
        ens.dim = d_;
        ens.nodes.assign(n_ + 1, Eigen::MatrixXd::Zero(d_, N_));
        return ens;
    }

    void assign_initial(ParticleEnsemble& ens) const { ens.nodes[0] = x0_; }

    void alloc_summands() {
        sum_s_.assign(static_cast<std::size_t>(N_) * n_ * d_, 0.0);
        if (!no_damping_) sum_c_.assign(static_cast<std::size_t>(N_) * n_ * d_, 0.0);
        jump_tau_.assign(N_, {});
        jump_term_.assign(N_, {});
        for (int p = 0; p < N_; ++p) {
            jump_tau_[p].reserve(paths_[p].jump_times.size());
            jump_term_[p].reserve(paths_[p].jump_times.size() * d_);
        }
    }

    // Store the step-j summand for particle p given its coefficient arguments.
    void store_summand(int j, int p, const Eigen::VectorXd& xarg,
                       const EmpiricalMeasure& law) {
        const double t = cfg_.grid.node(j);
        const double h = cfg_.grid.h;
        Eigen::VectorXd s = h * cs_.F(t, xarg, law);
        s.noalias() += cs_.G(t, xarg, law) * paths_[p].wiener.row(j).transpose();
        if (jspec_ != nullptr) {
            if (cs_.jump_compensator) {
                s.noalias() -= h * cs_.jump_compensator(t, xarg, law);
            } else {
                s.noalias() -= h * marks_->integrate([&](const Eigen::VectorXd& z) {
                    return cs_.J(t, xarg, law, z);
                });
            }
        }
        if (!trivial_basis_) s = fam_.generator().basis.transpose() * s;
        double* ss = &sum_s_[(static_cast<std::size_t>(p) * n_ + j) * d_];
        for (int i = 0; i < d_; ++i) ss[i] = s(i);

        if (!no_damping_) {
            Eigen::VectorXd c = h * (fam_.generator().damping * xarg);
            if (!trivial_basis_) c = fam_.generator().basis.transpose() * c;
            double* sc = &sum_c_[(static_cast<std::size_t>(p) * n_ + j) * d_];
            for (int i = 0; i < d_; ++i) sc[i] = c(i);
        }

        if (jspec_ != nullptr) {
            const auto& path = paths_[p];
            for (std::size_t k = 0; k < path.jump_times.size(); ++k) {
                const double tau = path.jump_times[k];
                if (path.step_of(tau) != j) continue;
                Eigen::VectorXd jt = cs_.J(tau, xarg, law, path.jump_marks[k]);
                if (!trivial_basis_) jt = fam_.generator().basis.transpose() * jt;
                jump_tau_[p].push_back(tau);
                for (int i = 0; i < d_; ++i) jump_term_[p].push_back(jt(i));
            }
        }
    }

    // Explicit schemes: step-j arguments are the state/law at j − delay,
    // clamped at 0 (the state is frozen at X₀ before time zero).
    void eval_summands_explicit(int j, int delay_steps, const ParticleEnsemble& ens,
                                const std::vector<EmpiricalMeasure>& laws) {
        const int arg = std::max(0, j - delay_steps);
        const EmpiricalMeasure& law = laws[arg];
        parallel_for(N_, cfg_.threads, [&](int begin, int end) {
            for (int p = begin; p < end; ++p)
                store_summand(j, p, ens.nodes[arg].col(p), law);
        });
    }

    // Fixed-point map: step-j arguments from the previous iterate.
    void eval_summands_from(int j, const ParticleEnsemble& prev,
                            const EmpiricalMeasure& law_j) {
        parallel_for(N_, cfg_.threads, [&](int begin, int end) {
            for (int p = begin; p < end; ++p)
                store_summand(j, p, prev.nodes[j].col(p), law_j);
        });
    }

    void accumulate_nodes(int m, ParticleEnsemble& ens) {
        const double tm = cfg_.grid.node(m);
        const double guard2 = cfg_.divergence_guard * cfg_.divergence_guard;
        std::atomic<bool> bad{false};
        parallel_for(N_, cfg_.threads, [&](int begin, int end) {
            Eigen::VectorXd acc(d_);
            for (int p = begin; p < end; ++p) {
                const double* stm = &st_[static_cast<std::size_t>(m) * d_];
                const double* ctm = &ct_[static_cast<std::size_t>(m) * d_];
                for (int i = 0; i < d_; ++i) {
                    acc(i) = stm[i] * x1e_(i, p) + ctm[i] * x0e_(i, p);
                    if (!no_damping_) acc(i) -= stm[i] * bx0e_(i, p);
                }
                if (!hom_only_) {
                    const double* ss_base =
                        &sum_s_[static_cast<std::size_t>(p) * n_ * d_];
                    const double* sc_base =
                        no_damping_ ? nullptr
                                    : &sum_c_[static_cast<std::size_t>(p) * n_ * d_];
                    for (int j = 0; j < m; ++j) {
                        const std::size_t lag = static_cast<std::size_t>(m - j) * d_;
                        const double* ss = ss_base + static_cast<std::size_t>(j) * d_;
                        for (int i = 0; i < d_; ++i) acc(i) += st_[lag + i] * ss[i];
                        if (sc_base != nullptr) {
                            const double* sc = sc_base + static_cast<std::size_t>(j) * d_;
                            for (int i = 0; i < d_; ++i) acc(i) += ct_[lag + i] * sc[i];
                        }
                    }
                    const auto& taus = jump_tau_[p];
                    for (std::size_t k = 0; k < taus.size(); ++k) {
                        if (taus[k] > tm) break;
                        const double* jt = &jump_term_[p][k * d_];
                        for (int i = 0; i < d_; ++i)
                            acc(i) += fam_.sine_entry(i, tm - taus[k]) * jt[i];
                    }
                }
                const double norm2 = acc.squaredNorm();
                if (!std::isfinite(norm2) || norm2 > guard2)
                    bad.store(true, std::memory_order_relaxed);
                if (trivial_basis_) {
                    ens.nodes[m].col(p) = acc;
                } else {
                    ens.nodes[m].col(p).noalias() = fam_.generator().basis * acc;
                }
            }
        });
        if (bad.load())
            throw divergence_error(
                "solver: non-finite or out-of-range state at step " +
                    std::to_string(m) + "; halve the step size",
                m);
    }

    const CoefficientSet& cs_;
    const CosineFamily& fam_;
    const QWienerSpec& qspec_;
    const JumpSpec* jspec_;
    const InitialData& init_;
    const SolveConfig& cfg_;
    int d_ = 0, n_ = 0, N_ = 0;
    bool no_damping_ = true;
    bool trivial_basis_ = true;
    bool hom_only_ = false;
    std::vector<double> ct_, st_;
    std::vector<NoisePath> paths_;
    Eigen::MatrixXd x0_, x1_, x0e_, x1e_, bx0e_;
    std::vector<double> sum_s_, sum_c_;
    std::vector<std::vector<double>> jump_tau_;
    std::vector<std::vector<double>> jump_term_;
    std::optional<CompensatorMarks> marks_;
};

// Grid-aligned delay: 1/k must be an integer multiple of h.
inline int caratheodory_delay_steps(const TimeGrid& grid, int k) {
    if (k < 0) throw contract_error("caratheodory: k must be >= 0");
    if (k == 0) return 0;
    const double delay = 1.0 / k;
    const int steps = static_cast<int>(std::llround(delay / grid.h));
    if (steps < 1 || std::abs(steps * grid.h - delay) > 1e-9 * std::max(1.0, delay)) {
        const int want = std::max(1, static_cast<int>(std::llround(delay / grid.h)));
        throw config_error("caratheodory: delay 1/" + std::to_string(k) +
                           " is not grid aligned; nearest valid step size is " +
                           std::to_string(delay / want));
    }
    return steps;
}

}  // namespace detail

inline ParticleEnsemble solve_euler_mild(const CoefficientSet& cs, const CosineFamily& fam,
                                         const QWienerSpec& qspec, const JumpSpec* jspec,
                                         const InitialData& init, const SolveConfig& cfg) {
    detail::MildSolver solver(cs, fam, qspec, jspec, init, cfg);
    return solver.run_explicit(0);
}

inline ParticleEnsemble solve_caratheodory(const CoefficientSet& cs,
                                           const CosineFamily& fam,
                                           const QWienerSpec& qspec, const JumpSpec* jspec,
                                           const InitialData& init, const SolveConfig& cfg) {
    const int delay = detail::caratheodory_delay_steps(cfg.grid, cfg.caratheodory_k);
    detail::MildSolver solver(cs, fam, qspec, jspec, init, cfg);
    if (cfg.caratheodory_k == 0) return solver.run_homogeneous();
    return solver.run_explicit(delay);
}

struct PicardOutcome {
    ParticleEnsemble ensemble;
    bool diverged = false;
    int iterations_done = 0;
    double last_growth = 0.0;
};

inline PicardOutcome picard_reference(const CoefficientSet& cs, const CosineFamily& fam,
                                      const QWienerSpec& qspec, const JumpSpec* jspec,
                                      const InitialData& init, const SolveConfig& cfg,
                                      int iters) {
    detail::MildSolver solver(cs, fam, qspec, jspec, init, cfg);
    auto st = solver.run_picard(iters);
    return {std::move(st.ensemble), st.diverged, st.iterations_done, st.last_growth};
}

struct CauchyRow {
    int k_coarse;
    int k_fine;
    double d_value;  // E sup_j ‖X_fine(t_j) − X_coarse(t_j)‖²
};

struct CauchyTable {
    std::vector<CauchyRow> rows;
    bool pass = false;  // nonincreasing within slack and last <= first/4
};

// D(k_{i+1}, k_i) for consecutive pairs of k_list, common random numbers.
inline CauchyTable cauchy_diagnostic(const CoefficientSet& cs, const CosineFamily& fam,
                                     const QWienerSpec& qspec, const JumpSpec* jspec,
                                     const InitialData& init, const SolveConfig& cfg,
                                     const std::vector<int>& k_list) {
    if (k_list.size() < 2)
        throw contract_error("cauchy_diagnostic: need at least two k values");
    for (std::size_t i = 1; i < k_list.size(); ++i)
        if (k_list[i] <= k_list[i - 1])
            throw contract_error("cauchy_diagnostic: k_list must increase");

    std::vector<ParticleEnsemble> runs;
    runs.reserve(k_list.size());
    for (int k : k_list) {
        SolveConfig c = cfg;
        c.scheme = Scheme::Caratheodory;
        c.caratheodory_k = k;
        runs.push_back(solve_caratheodory(cs, fam, qspec, jspec, init, c));
    }
    CauchyTable table;
    for (std::size_t i = 1; i < k_list.size(); ++i) {
        const auto per = sup_sq_diff_per_particle(runs[i], runs[i - 1]);
        double acc = 0.0;
        for (double v : per) acc += v;
        table.rows.push_back(
            {k_list[i - 1], k_list[i], acc / static_cast<double>(per.size())});
    }
    bool ok = true;
    for (std::size_t i = 1; i < table.rows.size(); ++i)
        ok = ok && table.rows[i].d_value <= table.rows[i - 1].d_value * 1.05;
    ok = ok && table.rows.back().d_value <= table.rows.front().d_value / 4.0;
    table.pass = ok;
    return table;
}

struct IncrementRow {
    int node_s;
    int node_t;
    double mean_sq_increment;  // E‖X(t) − X(s)‖²
    double ratio;              // against |t−s|² + ‖S((t−s)/2)‖² + |t−s|
};

struct IncrementReport {
    std::vector<IncrementRow> rows;
    double max_ratio = 0.0;
};

// E‖X(t)−X(s)‖² / (|t−s|² + ‖S((t−s)/2)‖² + |t−s|) over node pairs.
inline IncrementReport increment_diagnostic(const ParticleEnsemble& ens,
                                            const CosineFamily& fam,
                                            const std::vector<std::pair<int, int>>& pairs) {
    IncrementReport rep;
    for (const auto& [js, jt] : pairs) {
        if (js < 0 || jt < 0 || js >= static_cast<int>(ens.nodes.size()) ||
            jt >= static_cast<int>(ens.nodes.size()))
            throw contract_error("increment_diagnostic: node out of range");
        const double dt = std::abs(ens.grid.node(jt) - ens.grid.node(js));
        const double mean_sq =
            (ens.nodes[jt] - ens.nodes[js]).colwise().squaredNorm().mean();
        double ratio = 0.0;
        if (dt > 0.0) {
            const double sn = fam.sine_norm(0.5 * dt);
            ratio = mean_sq / (dt * dt + sn * sn + dt);
        }
        rep.rows.push_back({js, jt, mean_sq, ratio});
        rep.max_ratio = std::max(rep.max_ratio, ratio);
    }
    return rep;
}

}  // namespace mvwave
