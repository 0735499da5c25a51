#include <doctest.h>

#include <cmath>

#include "misbayes/dist.hpp"
#include "misbayes/errors.hpp"
#include "misbayes/linalg.hpp"
#include "misbayes/stats.hpp"
#include "oracles.hpp"

using namespace misbayes;

TEST_SUITE("dist") {

TEST_CASE("standard normal at the mode") {
    const auto spec = DistSpec::normal(0.0, 1.0);
    CHECK(logpdf(spec, 0.0) == doctest::Approx(-0.9189385332046727).epsilon(1e-12));
}

TEST_CASE("inverse-gamma change of variables identity") {
    const auto ig = DistSpec::inverse_gamma(2.3, 1.7);
    const auto g = DistSpec::gamma(2.3, 1.7);
    for (double x : {0.2, 0.9, 3.7, 11.0})
        CHECK(logpdf(ig, x) ==
              doctest::Approx(logpdf(g, 1.0 / x) - 2.0 * std::log(x)).epsilon(1e-12));
}

TEST_CASE("gamma evaluation of the module-1 likelihood term") {
    // J = 10, phi^2 = 0.5, s^2 = 4.5: Gamma(shape (J-1)/2 = 4.5, rate 1/(2 phi^2) = 1)
    const auto spec = DistSpec::gamma(4.5, 1.0);
    // independent direct formula
    const double expected =
        4.5 * std::log(1.0) - std::lgamma(4.5) + 3.5 * std::log(4.5) - 1.0 * 4.5;
    CHECK(logpdf(spec, 4.5) == doctest::Approx(expected).epsilon(1e-13));
    CHECK(logpdf(spec, 4.5) == doctest::Approx(-1.6894656821254825).epsilon(1e-10));
}

TEST_CASE("invalid parameters raise parameter-domain errors") {
    CHECK_THROWS_AS(DistSpec::normal(0.0, -1.0), ParamError);
    CHECK_THROWS_AS(DistSpec::gamma(0.0, 1.0), ParamError);
    CHECK_THROWS_AS(DistSpec::dirichlet(Eigen::Vector3d(1.0, -0.5, 1.0)), ParamError);
    Eigen::MatrixXd bad(2, 2);
    bad << 1.0, 2.0, 2.0, 1.0;  // indefinite
    CHECK_THROWS_AS(DistSpec::mvnormal(Eigen::Vector2d(0, 0), bad), DegeneracyError);
}

TEST_CASE("support boundaries yield -inf where representable") {
    CHECK(logpdf(DistSpec::gamma(2.0, 1.0), -1.0) == -INFINITY);
    CHECK(logpdf(DistSpec::binomial(10, 0.3), 11.0) == -INFINITY);
    CHECK(logpdf(DistSpec::binomial(10, 0.3), 3.5) == -INFINITY);
}

TEST_CASE("dirichlet symmetry: componentwise means near 1/n") {
    const int n = 5;
    const auto spec = DistSpec::dirichlet(Eigen::VectorXd::Ones(n));
    RngStream rng(11);
    const auto draws = sample(spec, rng, 4000);
    // Dir(1_n): var of each coordinate is (n-1)/(n^2 (n+1))
    const double se = std::sqrt((n - 1.0) / (n * n * (n + 1.0)) / 4000.0);
    for (int j = 0; j < n; ++j)
        CHECK(std::abs(draws.col(j).mean() - 1.0 / n) < 3.0 * se);
}

TEST_CASE("sampling is deterministic given the stream") {
    const auto spec = DistSpec::student_t(5.0, 1.0, 2.0);
    RngStream a = RngStream(5).descend({1, 2});
    RngStream b = RngStream(5).descend({1, 2});
    const auto da = sample(spec, a, 50);
    const auto db = sample(spec, b, 50);
    CHECK((da - db).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mvnormal empirical covariance matches within 5% Frobenius") {
    Eigen::MatrixXd sigma(3, 3);
    sigma << 2.0, 0.6, -0.3,
             0.6, 1.5,  0.4,
            -0.3, 0.4,  1.0;
    const auto spec = DistSpec::mvnormal(Eigen::Vector3d(1.0, -2.0, 0.5), sigma);
    RngStream rng(99);
    const auto draws = sample(spec, rng, 100000);
    const Eigen::MatrixXd emp = linalg::sample_cov(draws);
    CHECK((emp - sigma).norm() / sigma.norm() < 0.05);
}

TEST_CASE("densities integrate to one (trapezoid oracle)") {
    struct Case {
        DistSpec spec;
        double lo, hi;
    };
    const Case cases[] = {
        {DistSpec::normal(0.7, 2.0), -15.0, 16.0},
        {DistSpec::gamma(2.5, 1.3), 1e-9, 40.0},
        {DistSpec::inverse_gamma(3.0, 2.0), 1e-6, 200.0},
        {DistSpec::laplace(-1.0, 0.8), -30.0, 30.0},
        {DistSpec::student_t(5.0, 0.0, 1.0), -300.0, 300.0},
    };
    for (const auto& c : cases) {
        const double z = oracles::trapezoid(
            [&](double x) { return std::exp(logpdf(c.spec, x)); }, c.lo, c.hi, 400001);
        CHECK(z == doctest::Approx(1.0).epsilon(1e-4));
    }
    // discrete kind: exact pmf sum
    const auto bin = DistSpec::binomial(40, 0.3);
    double total = 0.0;
    for (int k = 0; k <= 40; ++k) total += std::exp(logpdf(bin, double(k)));
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sample/logpdf agreement: KS < 0.02 at 1e4 draws") {
    struct Case {
        DistSpec spec;
        double lo, hi;
    };
    const Case cases[] = {
        {DistSpec::normal(1.0, 4.0), -20.0, 22.0},
        {DistSpec::gamma(3.0, 2.0), 1e-9, 30.0},
        {DistSpec::inverse_gamma(4.0, 3.0), 1e-6, 60.0},
        {DistSpec::laplace(0.5, 1.5), -40.0, 41.0},
        {DistSpec::student_t(5.0, -1.0, 1.2), -400.0, 400.0},
    };
    int seed = 1700;
    for (const auto& c : cases) {
        RngStream rng(seed++);
        const Eigen::VectorXd draws = sample(c.spec, rng, 10000).col(0);
        oracles::NumericCdf cdf([&](double x) { return std::exp(logpdf(c.spec, x)); },
                                c.lo, c.hi, 200001);
        CHECK(stats::ks_vs_cdf(draws, [&](double x) { return cdf(x); }) < 0.02);
    }
    // binomial: compare the step CDFs at the atoms
    {
        const auto spec = DistSpec::binomial(30, 0.4);
        RngStream rng(4242);
        const Eigen::VectorXd draws = sample(spec, rng, 10000).col(0);
        double acc = 0.0, d = 0.0;
        for (int k = 0; k <= 30; ++k) {
            acc += std::exp(logpdf(spec, double(k)));
            const double emp =
                static_cast<double>((draws.array() <= double(k)).count()) / 10000.0;
            d = std::max(d, std::abs(emp - acc));
        }
        CHECK(d < 0.02);
    }
}

}  // TEST_SUITE
