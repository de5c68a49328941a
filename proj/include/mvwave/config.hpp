#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mvwave/averaging.hpp"
#include "mvwave/coefficients.hpp"
#include "mvwave/cosine_family.hpp"
#include "mvwave/errors.hpp"
#include "mvwave/noise.hpp"
#include "mvwave/solver.hpp"

namespace mvwave {

// Flat key = value experiment configuration with '#' comments.  Unknown and
// duplicate keys are rejected with line numbers; ranges are validated here so
// downstream builders only see usable values.
struct ExperimentConfig {
    int dim = 1;
    std::vector<double> eigenvalues;      // empty: derived from `a`
    std::optional<double> freq_a;         // λ_i = -a² when eigenvalues absent
    std::vector<double> damping;          // scalar b, or row-major d×d matrix
    std::vector<double> q_eigenvalues;    // empty: ones(dim)
    double jump_intensity = 1.0;
    std::string jump_mark = "gauss 0 0.5";
    std::uint64_t seed = 0;
    std::string model = "linear";
    double c = 1.0;
    double sigma = 0.3;
    double j0 = 0.2;
    std::string modulus = "linear";
    double delta = 0.2;
    double gamma = 1.0;
    std::string out_dir = ".";
    int n_particles = 1000;
    int n_steps = 128;
    double horizon = 1.0;  // key: T
    double x0_mean = 1.0;
    double x0_std = 0.0;
    double x1_mean = 0.0;
    double x1_std = 0.0;
    int threads = 1;
};

namespace detail {

inline std::vector<double> parse_list(const std::string& value, const std::string& key,
                                      int line) {
    std::vector<double> out;
    std::string item;
    std::stringstream ss(value);
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t pos = 0;
            const double v = std::stod(item, &pos);
            while (pos < item.size() && std::isspace(static_cast<unsigned char>(item[pos])))
                ++pos;
            if (pos != item.size()) throw std::invalid_argument("trailing characters");
            out.push_back(v);
        } catch (const std::exception&) {
            throw config_error("line " + std::to_string(line) + ": key '" + key +
                               "': cannot parse '" + item + "' as a number");
        }
    }
    if (out.empty())
        throw config_error("line " + std::to_string(line) + ": key '" + key +
                           "': empty list");
    return out;
}

inline double parse_double(const std::string& value, const std::string& key, int line) {
    return parse_list(value, key, line).front();
}

inline long long parse_int(const std::string& value, const std::string& key, int line) {
    const double v = parse_double(value, key, line);
    const long long i = static_cast<long long>(v);
    if (static_cast<double>(i) != v)
        throw config_error("line " + std::to_string(line) + ": key '" + key +
                           "' must be an integer");
    return i;
}

}  // namespace detail

inline ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg;
    std::map<std::string, int> seen;  // key -> first line
    bool have_b_alias = false;
    int b_line = 0, damping_line = 0, a_line = 0, eig_line = 0;
    double b_alias = 0.0;

    std::stringstream ss(text);
    std::string raw;
    int line = 0;
    while (std::getline(ss, raw)) {
        ++line;
        const auto hash = raw.find('#');
        std::string s = hash == std::string::npos ? raw : raw.substr(0, hash);
        const auto notspace = [](unsigned char ch) { return !std::isspace(ch); };
        s.erase(s.begin(), std::find_if(s.begin(), s.end(), notspace));
        s.erase(std::find_if(s.rbegin(), s.rend(), notspace).base(), s.end());
        if (s.empty()) continue;
        const auto eq = s.find('=');
        if (eq == std::string::npos)
            throw config_error("line " + std::to_string(line) +
                               ": expected 'key = value', got '" + s + "'");
        std::string key = s.substr(0, eq);
        std::string value = s.substr(eq + 1);
        key.erase(std::find_if(key.rbegin(), key.rend(), notspace).base(), key.end());
        value.erase(value.begin(), std::find_if(value.begin(), value.end(), notspace));
        if (key.empty())
            throw config_error("line " + std::to_string(line) + ": empty key");
        if (seen.count(key))
            throw config_error("duplicate key '" + key + "' at lines " +
                               std::to_string(seen[key]) + " and " +
                               std::to_string(line));
        seen[key] = line;

        if (key == "dim") {
            cfg.dim = static_cast<int>(detail::parse_int(value, key, line));
        } else if (key == "eigenvalues") {
            cfg.eigenvalues = detail::parse_list(value, key, line);
            eig_line = line;
        } else if (key == "a") {
            cfg.freq_a = detail::parse_double(value, key, line);
            a_line = line;
        } else if (key == "damping") {
            cfg.damping = detail::parse_list(value, key, line);
            damping_line = line;
        } else if (key == "b") {
            b_alias = detail::parse_double(value, key, line);
            have_b_alias = true;
            b_line = line;
        } else if (key == "q_eigenvalues") {
            cfg.q_eigenvalues = detail::parse_list(value, key, line);
        } else if (key == "jump_intensity") {
            cfg.jump_intensity = detail::parse_double(value, key, line);
        } else if (key == "jump_mark") {
            cfg.jump_mark = value;
        } else if (key == "seed") {
            cfg.seed = static_cast<std::uint64_t>(detail::parse_int(value, key, line));
        } else if (key == "model") {
            cfg.model = value;
        } else if (key == "c") {
            cfg.c = detail::parse_double(value, key, line);
        } else if (key == "sigma") {
            cfg.sigma = detail::parse_double(value, key, line);
        } else if (key == "j0") {
            cfg.j0 = detail::parse_double(value, key, line);
        } else if (key == "modulus") {
            cfg.modulus = value;
        } else if (key == "delta") {
            cfg.delta = detail::parse_double(value, key, line);
        } else if (key == "gamma") {
            cfg.gamma = detail::parse_double(value, key, line);
        } else if (key == "out_dir") {
            cfg.out_dir = value;
        } else if (key == "n_particles") {
            cfg.n_particles = static_cast<int>(detail::parse_int(value, key, line));
        } else if (key == "n_steps") {
            cfg.n_steps = static_cast<int>(detail::parse_int(value, key, line));
        } else if (key == "T") {
            cfg.horizon = detail::parse_double(value, key, line);
        } else if (key == "x0_mean") {
            cfg.x0_mean = detail::parse_double(value, key, line);
        } else if (key == "x0_std") {
            cfg.x0_std = detail::parse_double(value, key, line);
        } else if (key == "x1_mean") {
            cfg.x1_mean = detail::parse_double(value, key, line);
        } else if (key == "x1_std") {
            cfg.x1_std = detail::parse_double(value, key, line);
        } else if (key == "threads") {
            cfg.threads = static_cast<int>(detail::parse_int(value, key, line));
        } else {
            throw config_error("line " + std::to_string(line) + ": unknown key '" +
                               key + "'");
        }
    }

    // range validation, naming the offending key
    if (cfg.dim < 1) throw config_error("key 'dim' must be >= 1");
    if (!(cfg.horizon > 0.0)) throw config_error("key 'T' must be > 0");
    if (cfg.n_steps < 1) throw config_error("key 'n_steps' must be >= 1");
    if (cfg.n_particles < 1) throw config_error("key 'n_particles' must be >= 1");
    if (cfg.threads < 1) throw config_error("key 'threads' must be >= 1");
    for (double l : cfg.eigenvalues)
        if (l > 0.0)
            throw config_error("key 'eigenvalues' (line " + std::to_string(eig_line) +
                               "): eigenvalues must be <= 0");
    if (!cfg.eigenvalues.empty() && cfg.freq_a)
        throw config_error("keys 'eigenvalues' (line " + std::to_string(eig_line) +
                           ") and 'a' (line " + std::to_string(a_line) +
                           ") are mutually exclusive");
    if (!cfg.damping.empty() && have_b_alias)
        throw config_error("keys 'damping' (line " + std::to_string(damping_line) +
                           ") and 'b' (line " + std::to_string(b_line) +
                           ") are mutually exclusive");
    if (have_b_alias) cfg.damping = {b_alias};
    if (!cfg.damping.empty() &&
        cfg.damping.size() != 1 &&
        cfg.damping.size() != static_cast<std::size_t>(cfg.dim) * cfg.dim)
        throw config_error("key 'damping' must be a scalar or a row-major dim x dim list");
    if (!cfg.eigenvalues.empty() &&
        cfg.eigenvalues.size() != static_cast<std::size_t>(cfg.dim))
        throw config_error("key 'eigenvalues' must list exactly dim values");
    if (!cfg.q_eigenvalues.empty() &&
        cfg.q_eigenvalues.size() != static_cast<std::size_t>(cfg.dim))
        throw config_error("key 'q_eigenvalues' must list exactly dim values");
    for (double q : cfg.q_eigenvalues)
        if (q < 0.0) throw config_error("key 'q_eigenvalues' must be >= 0");
    if (!(cfg.jump_intensity > 0.0))
        throw config_error("key 'jump_intensity' must be > 0");
    if (!(cfg.delta > 0.0 && cfg.delta < 1.0))
        throw config_error("key 'delta' must lie in (0, 1)");
    if (!(cfg.gamma > 0.0)) throw config_error("key 'gamma' must be > 0");
    if (cfg.x0_std < 0.0 || cfg.x1_std < 0.0)
        throw config_error("keys 'x0_std'/'x1_std' must be >= 0");
    if (cfg.model != "linear" && cfg.model != "decay") {
        if (cfg.model == "custom-plugin")
            throw config_error(
                "key 'model': custom-plugin coefficients are not supported by this "
                "build; use 'linear' or 'decay'");
        throw config_error("key 'model' must be 'linear' or 'decay'");
    }
    if (cfg.modulus != "linear" && cfg.modulus != "log" && cfg.modulus != "loglog")
        throw config_error("key 'modulus' must be 'linear', 'log' or 'loglog'");
    return cfg;
}

// ───── builders ──────────────────────────────────────────────────────────────

inline CosineFamily build_family(const ExperimentConfig& cfg) {
    Eigen::VectorXd lambdas(cfg.dim);
    if (!cfg.eigenvalues.empty()) {
        for (int i = 0; i < cfg.dim; ++i) lambdas(i) = cfg.eigenvalues[i];
    } else {
        const double a = cfg.freq_a.value_or(1.0);
        lambdas.setConstant(-a * a);
    }
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(cfg.dim, cfg.dim);
    if (cfg.damping.size() == 1) {
        b = cfg.damping[0] * Eigen::MatrixXd::Identity(cfg.dim, cfg.dim);
    } else if (!cfg.damping.empty()) {
        for (int i = 0; i < cfg.dim; ++i)
            for (int j = 0; j < cfg.dim; ++j)
                b(i, j) = cfg.damping[static_cast<std::size_t>(i) * cfg.dim + j];
    }
    SpectralGenerator gen(cfg.dim, lambdas, Eigen::MatrixXd::Identity(cfg.dim, cfg.dim),
                          b);
    return CosineFamily(std::move(gen), cfg.horizon);
}

inline QWienerSpec build_qspec(const ExperimentConfig& cfg) {
    Eigen::VectorXd q(cfg.dim);
    if (cfg.q_eigenvalues.empty()) {
        q.setOnes();
    } else {
        for (int i = 0; i < cfg.dim; ++i) q(i) = cfg.q_eigenvalues[i];
    }
    return QWienerSpec(q);
}

inline JumpSpec build_jspec(const ExperimentConfig& cfg) {
    std::stringstream ss(cfg.jump_mark);
    std::string kind;
    ss >> kind;
    double p1 = 0.0, p2 = 0.0;
    if (kind == "dirac") {
        if (!(ss >> p1)) throw config_error("key 'jump_mark': dirac needs one parameter");
        return JumpSpec::dirac(cfg.dim, p1, cfg.jump_intensity);
    }
    if (kind == "gauss") {
        if (!(ss >> p1 >> p2))
            throw config_error("key 'jump_mark': gauss needs mean and stddev");
        return JumpSpec::gauss(cfg.dim, p1, p2, cfg.jump_intensity);
    }
    if (kind == "uniform") {
        if (!(ss >> p1 >> p2))
            throw config_error("key 'jump_mark': uniform needs lower and upper bounds");
        return JumpSpec::uniform(cfg.dim, p1, p2, cfg.jump_intensity);
    }
    throw config_error("key 'jump_mark' must be 'dirac z0', 'gauss m s' or 'uniform a b'");
}

inline Modulus build_modulus(const ExperimentConfig& cfg) {
    if (cfg.modulus == "linear") return Modulus::linear(cfg.gamma);
    if (cfg.modulus == "log") return Modulus::log_modulus(cfg.delta);
    return Modulus::loglog_modulus(cfg.delta);
}

struct ModelBundle {
    CoefficientSet standard;
    AveragedCoefficients averaged;
};

inline ModelBundle build_model(const ExperimentConfig& cfg, const QWienerSpec& qspec,
                               const JumpSpec& jspec) {
    ModelBundle out;
    if (cfg.model == "decay") {
        DecayModel m = make_decay_model(cfg.dim, cfg.c, cfg.sigma, cfg.j0, qspec, jspec);
        out.standard = std::move(m.standard);
        out.averaged = std::move(m.averaged);
    } else {
        out.standard = make_linear_model(cfg.dim, cfg.c, cfg.sigma, cfg.j0, qspec, jspec);
        // time-independent model: its own average, so the sweep couples
        // identical dynamics and the error vanishes
        const CoefficientSet cs = out.standard;
        out.averaged.dim = cs.dim;
        out.averaged.k_dim = cs.k_dim;
        out.averaged.q_sqrt = cs.q_sqrt;
        out.averaged.F = [cs](const Eigen::VectorXd& x, const EmpiricalMeasure& mu) {
            return cs.F(0.0, x, mu);
        };
        out.averaged.G = [cs](const Eigen::VectorXd& x, const EmpiricalMeasure& mu) {
            return cs.G(0.0, x, mu);
        };
        out.averaged.J = [cs](const Eigen::VectorXd& x, const EmpiricalMeasure& mu,
                              const Eigen::VectorXd& z) { return cs.J(0.0, x, mu, z); };
        out.averaged.jump_compensator = [cs](const Eigen::VectorXd& x,
                                             const EmpiricalMeasure& mu) {
            return cs.jump_compensator(0.0, x, mu);
        };
        out.averaged.phi1 = [](double t1) { return 1.0 / (1.0 + t1); };
        out.averaged.phi2 = out.averaged.phi1;
        out.averaged.phi3 = out.averaged.phi1;
        out.averaged.psi = cs.modulus;
        out.averaged.K_bound = cs.K_bound;
    }
    return out;
}

inline InitialData build_initial(const ExperimentConfig& cfg) {
    InitialData init;
    init.x0_mean = Eigen::VectorXd::Constant(cfg.dim, cfg.x0_mean);
    init.x1_mean = Eigen::VectorXd::Constant(cfg.dim, cfg.x1_mean);
    init.x0_std = cfg.x0_std;
    init.x1_std = cfg.x1_std;
    return init;
}

inline SolveConfig build_solve_config(const ExperimentConfig& cfg) {
    SolveConfig sc(TimeGrid(cfg.horizon, cfg.n_steps));
    sc.n_particles = cfg.n_particles;
    sc.master_seed = cfg.seed;
    sc.threads = cfg.threads;
    return sc;
}

}  // namespace mvwave
