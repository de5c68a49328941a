#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "mvwave/noise.hpp"
#include "mvwave/stats.hpp"

using namespace mvwave;

TEST_CASE("wiener increments", "[noise]") {
    SECTION("zero covariance gives all-zero increments") {
        Eigen::VectorXd q(1);
        q << 0.0;
        QWienerSpec spec(q);
        TimeGrid grid(1.0, 100);
        rng::CounterStream s(3, 0, rng::Purpose::WienerIncrements);
        CHECK(sample_wiener(spec, grid, s).cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("per-step variance matches q·h (chi-square concentration)") {
        Eigen::VectorXd q(1);
        q << 1.0;
        QWienerSpec spec(q);
        const int n = 100000;
        TimeGrid grid(n * 0.01, n);  // h = 0.01
        rng::CounterStream s(5, 1, rng::Purpose::WienerIncrements);
        const Eigen::MatrixXd dw = sample_wiener(spec, grid, s);
        std::vector<double> sq(n);
        for (int j = 0; j < n; ++j) sq[j] = dw(j, 0) * dw(j, 0);
        const double var = stats::mean(sq);
        CHECK(std::abs(var - 0.01) <= 3.0 * std::sqrt(2.0 / n) * 0.01);
    }
    SECTION("same stream id reproduces identical bits") {
        Eigen::VectorXd q(3);
        q << 0.5, 1.0, 0.25;
        QWienerSpec spec(q);
        TimeGrid grid(2.0, 64);
        rng::CounterStream a(42, 7, rng::Purpose::WienerIncrements);
        rng::CounterStream b(42, 7, rng::Purpose::WienerIncrements);
        CHECK(sample_wiener(spec, grid, a) == sample_wiener(spec, grid, b));
    }
    SECTION("negative q rejected upstream") {
        Eigen::VectorXd q(1);
        q << -0.1;
        CHECK_THROWS_AS(QWienerSpec(q), contract_error);
    }
}

TEST_CASE("jump sampling", "[noise]") {
    SECTION("horizon zero gives no jumps") {
        const JumpSpec spec = JumpSpec::dirac(1, 1.0, 2.0);
        rng::CounterStream c(1, 0, rng::Purpose::JumpCount);
        rng::CounterStream t(1, 0, rng::Purpose::JumpTimes);
        rng::CounterStream m(1, 0, rng::Purpose::JumpMarks);
        const auto [times, marks] = sample_jumps(spec, 0.0, c, t, m);
        CHECK(times.empty());
        CHECK(marks.empty());
    }
    SECTION("empirical mean count matches λ·T") {
        const JumpSpec spec = JumpSpec::gauss(1, 0.0, 1.0, 2.0);
        const double horizon = 5.0;  // λT = 10
        const int replicas = 10000;
        double acc = 0.0;
        for (int r = 0; r < replicas; ++r) {
            rng::CounterStream c(99, r, rng::Purpose::JumpCount);
            rng::CounterStream t(99, r, rng::Purpose::JumpTimes);
            rng::CounterStream m(99, r, rng::Purpose::JumpMarks);
            acc += static_cast<double>(std::get<0>(sample_jumps(spec, horizon, c, t, m)).size());
        }
        const double mean_count = acc / replicas;
        CHECK(std::abs(mean_count - 10.0) <= 3.0 * std::sqrt(10.0 / replicas));
    }
    SECTION("dirac marks are all equal and times sorted") {
        const JumpSpec spec = JumpSpec::dirac(2, 1.5, 4.0);
        rng::CounterStream c(7, 3, rng::Purpose::JumpCount);
        rng::CounterStream t(7, 3, rng::Purpose::JumpTimes);
        rng::CounterStream m(7, 3, rng::Purpose::JumpMarks);
        const auto [times, marks] = sample_jumps(spec, 3.0, c, t, m);
        REQUIRE_FALSE(times.empty());
        for (std::size_t i = 1; i < times.size(); ++i) CHECK(times[i - 1] <= times[i]);
        for (const auto& z : marks) {
            CHECK(z(0) == 1.5);
            CHECK(z(1) == 1.5);
        }
    }
    SECTION("empirical mark second moment approaches the recorded one") {
        const JumpSpec spec = JumpSpec::uniform(1, -1.0, 2.0, 1.0);
        rng::CounterStream m(13, 0, rng::Purpose::JumpMarks);
        double acc = 0.0;
        const int n = 200000;
        for (int i = 0; i < n; ++i) acc += spec.sample_mark(m).squaredNorm();
        CHECK(std::abs(acc / n - spec.mark_second_moment()) <= 0.02);
    }
}

TEST_CASE("noise path determinism", "[noise]") {
    Eigen::VectorXd q(2);
    q << 1.0, 0.5;
    QWienerSpec qspec(q);
    const JumpSpec jspec = JumpSpec::gauss(1, 0.2, 0.4, 1.5);
    TimeGrid grid(1.0, 32);
    const NoisePath a = sample_noise_path(qspec, &jspec, grid, 2024, 17);
    const NoisePath b = sample_noise_path(qspec, &jspec, grid, 2024, 17);
    CHECK(a.wiener == b.wiener);
    CHECK(a.jump_times == b.jump_times);
    REQUIRE(a.jump_marks.size() == b.jump_marks.size());
    for (std::size_t i = 0; i < a.jump_marks.size(); ++i)
        CHECK(a.jump_marks[i] == b.jump_marks[i]);
    const NoisePath c = sample_noise_path(qspec, &jspec, grid, 2024, 18);
    CHECK(a.wiener != c.wiener);
}

TEST_CASE("compensated integrals", "[noise]") {
    Eigen::VectorXd q(1);
    q << 1.0;
    QWienerSpec qspec(q);
    const JumpSpec jspec = JumpSpec::dirac(1, 1.0, 1.0);
    TimeGrid grid(2.0, 50);

    SECTION("zero integrand gives zeros") {
        const NoisePath path = sample_noise_path(qspec, &jspec, grid, 5, 0);
        const auto out = compensated_integral(
            path, [](double, const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(1); },
            [](double) { return Eigen::VectorXd::Zero(1); });
        for (const auto& v : out) CHECK(v.norm() == 0.0);
    }
    SECTION("constant integrand: total is c(N_T - λT), mean ~ 0") {
        const double c = 0.7;
        const int replicas = 10000;
        double acc = 0.0;
        for (int r = 0; r < replicas; ++r) {
            const NoisePath path = sample_noise_path(qspec, &jspec, grid, 31, r);
            const auto out = compensated_integral(
                path,
                [c](double, const Eigen::VectorXd&) {
                    return Eigen::VectorXd::Constant(1, c);
                },
                [c, &jspec](double) {
                    return Eigen::VectorXd::Constant(1, c * jspec.total_intensity);
                });
            double total = 0.0;
            for (const auto& v : out) total += v(0);
            const double n_jumps = static_cast<double>(path.jump_times.size());
            CHECK(std::abs(total - c * (n_jumps - grid.horizon)) <= 1e-10);
            acc += total;
        }
        CHECK(std::abs(acc / replicas) <=
              3.0 * c * std::sqrt(grid.horizon / replicas));
    }
    SECTION("isometry: E|∫ c dÑ|² = c² λ T within 5%") {
        const double c = 1.3;
        const int replicas = 10000;
        double acc = 0.0;
        for (int r = 0; r < replicas; ++r) {
            const NoisePath path = sample_noise_path(qspec, &jspec, grid, 37, r);
            const auto out = compensated_integral(
                path,
                [c](double, const Eigen::VectorXd&) {
                    return Eigen::VectorXd::Constant(1, c);
                },
                [c, &jspec](double) {
                    return Eigen::VectorXd::Constant(1, c * jspec.total_intensity);
                });
            double total = 0.0;
            for (const auto& v : out) total += v(0);
            acc += total * total;
        }
        const double expected = c * c * jspec.total_intensity * grid.horizon;
        CHECK(std::abs(acc / replicas - expected) <= 0.05 * expected);
    }
    SECTION("Monte Carlo compensator agrees with the closed form") {
        const NoisePath path = sample_noise_path(qspec, &jspec, grid, 41, 0);
        const auto integrand = [](double s, const Eigen::VectorXd& z) {
            return Eigen::VectorXd(std::exp(-s) * z);
        };
        const CompensatorMarks marks(jspec, 2000, 7);
        const auto mc = compensated_integral(path, integrand, nullptr, &marks);
        const auto closed = compensated_integral(path, integrand, [&](double s) {
            return Eigen::VectorXd(std::exp(-s) * jspec.total_intensity * jspec.mark_mean());
        });
        for (std::size_t j = 0; j < mc.size(); ++j)
            CHECK((mc[j] - closed[j]).norm() <= 1e-10);  // dirac marks: MC is exact
    }
}

TEST_CASE("maximal inequality for the compensated jump integral", "[noise]") {
    Eigen::VectorXd q(1);
    q << 1.0;
    QWienerSpec qspec(q);
    const JumpSpec jspec = JumpSpec::gauss(1, 0.5, 0.8, 2.0);
    TimeGrid grid(1.0, 20);
    const auto check = kunita_p2_check(
        qspec, jspec, grid,
        [](double s, const Eigen::VectorXd& z) {
            return Eigen::VectorXd((1.0 + 0.5 * std::sin(s)) * z);
        },
        4000, 911);
    CHECK(check.holds);
    CHECK(check.lhs > 0.0);
    // Doob's constant leaves real margin at p = 2
    CHECK(check.lhs <= 0.9 * check.rhs);
}
