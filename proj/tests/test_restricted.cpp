#include <doctest.h>

#include <cmath>
#include <memory>

#include "misbayes/dist.hpp"
#include "misbayes/linalg.hpp"
#include "misbayes/errors.hpp"
#include "misbayes/registry.hpp"
#include "misbayes/restricted.hpp"
#include "misbayes/stats.hpp"
#include "oracles.hpp"

using namespace misbayes;
using restricted::AbcConfig;
using restricted::AbcDistance;
using restricted::AbcKernel;
using restricted::BslConfig;
using restricted::BslVariant;
using restricted::GenerativeModel;

TEST_SUITE("restricted") {

TEST_CASE("censor_summary clamps, preserves interior points, idempotent") {
    Eigen::Vector3d y(-5.0, 0.0, 7.0);
    const Eigen::VectorXd c = restricted::censor_summary(y, -1.0, 3.0);
    CHECK(c[0] == -1.0);
    CHECK(c[1] == 0.0);
    CHECK(c[2] == 3.0);
    Eigen::Vector3d inside(0.1, 0.2, 0.3);
    CHECK((restricted::censor_summary(inside, -1.0, 3.0) - inside).norm() == 0.0);
    CHECK((restricted::censor_summary(c, -1.0, 3.0) - c).norm() == 0.0);
    CHECK_THROWS_AS(restricted::censor_summary(y, 3.0, -1.0), ContractError);
}

TEST_CASE("abc_loglik: exact match gives log K(0) = 0 up to constant") {
    GenerativeModel model;
    model.theta_dim = 1;
    model.simulate = [](const Eigen::VectorXd& theta, RngStream&) { return theta; };
    model.summary = registry::summary_identity();
    AbcConfig cfg;
    cfg.m = 1;
    cfg.epsilon = 0.5;
    cfg.kernel = AbcKernel::gaussian;
    const Eigen::VectorXd s_obs = Eigen::VectorXd::Constant(1, 0.7);
    CHECK(restricted::abc_loglik(s_obs, s_obs, model, cfg, RngStream(1)) ==
          doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("abc_loglik: uniform kernel with no accepted simulations is -inf") {
    GenerativeModel model;
    model.theta_dim = 1;
    model.simulate = [](const Eigen::VectorXd& theta, RngStream&) { return theta; };
    model.summary = registry::summary_identity();
    AbcConfig cfg;
    cfg.m = 10;
    cfg.epsilon = 0.1;
    cfg.kernel = AbcKernel::uniform;
    const Eigen::VectorXd theta = Eigen::VectorXd::Zero(1);
    const Eigen::VectorXd s_obs = Eigen::VectorXd::Constant(1, 5.0);
    CHECK(restricted::abc_loglik(theta, s_obs, model, cfg, RngStream(2)) ==
          -std::numeric_limits<double>::infinity());
}

TEST_CASE("abc_loglik approximates the kernel-smoothed density (quadrature oracle)") {
    // theta-independent simulator: summary ~ N(0,1); gaussian kernel
    GenerativeModel model;
    model.theta_dim = 1;
    model.simulate = [](const Eigen::VectorXd&, RngStream& rng) {
        return Eigen::VectorXd::Constant(1, rng.normal());
    };
    model.summary = registry::summary_identity();
    AbcConfig cfg;
    cfg.m = 10000;
    cfg.epsilon = 0.4;
    cfg.kernel = AbcKernel::gaussian;
    const double s = 0.8;
    const double est = restricted::abc_loglik(Eigen::VectorXd::Zero(1),
                                              Eigen::VectorXd::Constant(1, s), model, cfg,
                                              RngStream(3));
    // E[K_eps(|s - X|)] with X ~ N(0,1), by numeric integration
    const double expected = std::log(oracles::trapezoid(
        [&](double x) {
            const double k = std::exp(-0.5 * (s - x) * (s - x) / (cfg.epsilon * cfg.epsilon));
            return k * std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
        },
        -12.0, 12.0, 200001));
    CHECK(std::abs(est - expected) < 0.05);
}

TEST_CASE("abc gaussian loglik decreases as the nearest distance grows") {
    // fixed simulated summaries via a frozen stream; shift s_obs away
    GenerativeModel model;
    model.theta_dim = 1;
    model.simulate = [](const Eigen::VectorXd&, RngStream& rng) {
        return Eigen::VectorXd::Constant(1, rng.normal());
    };
    model.summary = registry::summary_identity();
    AbcConfig cfg;
    cfg.m = 50;
    cfg.epsilon = 0.3;
    double prev = restricted::abc_loglik(Eigen::VectorXd::Zero(1),
                                         Eigen::VectorXd::Constant(1, 0.0), model, cfg,
                                         RngStream(4));
    for (double s : {2.0, 4.0, 6.0, 8.0}) {
        const double cur = restricted::abc_loglik(Eigen::VectorXd::Zero(1),
                                                  Eigen::VectorXd::Constant(1, s), model,
                                                  cfg, RngStream(4));
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("bsl_loglik hand case: summaries {0,2}, s_obs = 1") {
    // mu_m = 1, Sigma_m = ((0-1)^2 + (2-1)^2)/2 = 1 -> logpdf at 1 is -0.5 log(2 pi)
    const double expected = -0.5 * std::log(2.0 * M_PI);
    const auto direct = [&] {
        Eigen::MatrixXd sims(2, 1);
        sims << 0.0, 2.0;
        const Eigen::VectorXd mu = sims.colwise().mean();
        const Eigen::MatrixXd centered = sims.rowwise() - mu.transpose();
        const Eigen::MatrixXd sigma = centered.transpose() * centered / 2.0;
        return logpdf(DistSpec::mvnormal(mu, sigma), Eigen::VectorXd::Constant(1, 1.0));
    }();
    CHECK(direct == doctest::Approx(expected).epsilon(1e-12));

    // and through bsl_loglik with a simulator that emits 0, 2 alternately
    auto counter = std::make_shared<int>(0);
    GenerativeModel model;
    model.theta_dim = 1;
    model.summary = registry::summary_identity();
    model.simulate = [counter](const Eigen::VectorXd&, RngStream&) {
        return Eigen::VectorXd::Constant(1, ((*counter)++ % 2 == 0) ? 0.0 : 2.0);
    };
    BslConfig cfg;
    cfg.m = 2;
    const double got = restricted::bsl_loglik(Eigen::VectorXd::Zero(1),
                                              Eigen::VectorXd::Constant(1, 1.0), model, cfg,
                                              RngStream(5));
    CHECK(got == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("bsl_loglik: identical summaries raise a degeneracy error") {
    GenerativeModel model;
    model.theta_dim = 1;
    model.simulate = [](const Eigen::VectorXd&, RngStream&) {
        return Eigen::VectorXd::Constant(1, 3.0);
    };
    model.summary = registry::summary_identity();
    BslConfig cfg;
    cfg.m = 5;
    CHECK_THROWS_AS(restricted::bsl_loglik(Eigen::VectorXd::Zero(1),
                                           Eigen::VectorXd::Constant(1, 3.0), model, cfg,
                                           RngStream(6)),
                    DegeneracyError);
}

TEST_CASE("bsl matches the exact gaussian density for a N(theta,1) summary") {
    GenerativeModel model = registry::gaussian_toy(Eigen::VectorXd::Ones(1));
    BslConfig cfg;
    cfg.m = 20000;
    const double s_obs = 0.3;
    for (double theta : {-1.0, 0.0, 1.0}) {
        const double got =
            restricted::bsl_loglik(Eigen::VectorXd::Constant(1, theta),
                                   Eigen::VectorXd::Constant(1, s_obs), model, cfg,
                                   RngStream(100 + static_cast<int>(theta * 7)));
        const double expected = logpdf(DistSpec::normal(theta, 1.0), s_obs);
        CHECK(std::abs(got - expected) < 0.05);
    }
}

TEST_CASE("rbsl reduces to bsl at Gamma = 0 on the same stream") {
    GenerativeModel model = registry::gaussian_toy(Eigen::Vector2d(1.0, 2.0));
    BslConfig cfg;
    cfg.m = 30;
    cfg.variant = BslVariant::mean_adjust;
    const Eigen::Vector2d theta(0.5, -0.5);
    const Eigen::Vector2d s_obs(0.6, -0.2);
    const double a = restricted::rbsl_loglik(theta, Eigen::Vector2d::Zero(), s_obs, model,
                                             cfg, RngStream(7));
    BslConfig plain = cfg;
    plain.variant = BslVariant::standard;
    const double b = restricted::bsl_loglik(theta, s_obs, model, plain, RngStream(7));
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("rbsl variance inflation and mean adjustment hand values") {
    // d=1: Sigma_m = 4, gamma = 1 -> inflated = 4 + 2*1*2 = 8
    Eigen::MatrixXd sigma(1, 1);
    sigma << 4.0;
    const Eigen::MatrixXd root = linalg::spd_sqrt(sigma);
    const Eigen::MatrixXd inflated =
        sigma + root * Eigen::VectorXd::Constant(1, 1.0).asDiagonal() * root;
    CHECK(inflated(0, 0) == doctest::Approx(8.0));
    // mean adjustment: mu_m = 1, sd = 2, gamma = 0.5 -> 2.0
    CHECK(1.0 + 2.0 * 0.5 == doctest::Approx(2.0));

    // through the public surface with a two-point simulator (summaries 0, 2·s)
    auto counter = std::make_shared<int>(0);
    GenerativeModel model;
    model.theta_dim = 1;
    model.simulate = [counter](const Eigen::VectorXd&, RngStream&) {
        return Eigen::VectorXd::Constant(1, ((*counter)++ % 2 == 0) ? 0.0 : 4.0);
    };
    model.summary = registry::summary_identity();
    BslConfig cfg;
    cfg.m = 2;  // mu_m = 2, Sigma_m = 4
    cfg.variant = BslVariant::variance_inflate;
    const double got = restricted::rbsl_loglik(
        Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, 1.0),
        Eigen::VectorXd::Constant(1, 2.0), model, cfg, RngStream(8));
    CHECK(got == doctest::Approx(logpdf(DistSpec::normal(2.0, 8.0), 2.0)).epsilon(1e-12));

    (*counter) = 0;
    cfg.variant = BslVariant::mean_adjust;
    const double got2 = restricted::rbsl_loglik(
        Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, 0.5),
        Eigen::VectorXd::Constant(1, 3.0), model, cfg, RngStream(9));
    CHECK(got2 == doctest::Approx(logpdf(DistSpec::normal(3.0, 4.0), 3.0)).epsilon(1e-12));
}

TEST_CASE("rbsl variance inflation never shrinks the covariance") {
    RngStream rng(10);
    for (int rep = 0; rep < 20; ++rep) {
        Eigen::MatrixXd a(3, 3);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) a(i, j) = rng.normal();
        const Eigen::MatrixXd sigma = a * a.transpose() + Eigen::MatrixXd::Identity(3, 3);
        Eigen::Vector3d gamma(rng.gamma(1.0), rng.gamma(1.0), rng.gamma(1.0));
        const Eigen::MatrixXd root = linalg::spd_sqrt(sigma);
        const Eigen::MatrixXd inflated = sigma + root * gamma.asDiagonal() * root;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inflated - sigma);
        CHECK(es.eigenvalues().minCoeff() > -1e-10);
    }
}

TEST_CASE("bsl argmax is invariant under a joint affine map of the summaries") {
    // summaries of simulator N(theta, 1); affine map s -> 3 s - 2
    GenerativeModel base = registry::gaussian_toy(Eigen::VectorXd::Ones(1));
    GenerativeModel mapped = base;
    mapped.summary = [](const Eigen::VectorXd& x) {
        return Eigen::VectorXd(3.0 * x.array() - 2.0);
    };
    BslConfig cfg;
    cfg.m = 4000;
    const double s_obs = 0.4;
    double best_base = -1e300, arg_base = 0.0, best_map = -1e300, arg_map = 0.0;
    for (double theta = -1.0; theta <= 1.51; theta += 0.25) {
        const Eigen::VectorXd tv = Eigen::VectorXd::Constant(1, theta);
        const double lb = restricted::bsl_loglik(tv, Eigen::VectorXd::Constant(1, s_obs),
                                                 base, cfg, RngStream(11).child(0));
        const double lm = restricted::bsl_loglik(
            tv, Eigen::VectorXd::Constant(1, 3.0 * s_obs - 2.0), mapped, cfg,
            RngStream(11).child(0));
        // identical streams: the mapped loglik differs by exactly -log|3|
        CHECK(lm == doctest::Approx(lb - std::log(3.0)).epsilon(1e-9));
        if (lb > best_base) { best_base = lb; arg_base = theta; }
        if (lm > best_map) { best_map = lm; arg_map = theta; }
    }
    CHECK(arg_base == doctest::Approx(arg_map));
}

TEST_CASE("q-posterior: exponent vanishes at the MLE and the mode is the MLE") {
    RngStream rng(12);
    glm::GlmData d;
    d.Z.resize(80, 2);
    d.Z.col(0).setOnes();
    for (int i = 0; i < 80; ++i) d.Z(i, 1) = rng.normal();
    d.y = d.Z * Eigen::Vector2d(0.4, -0.8);
    for (int i = 0; i < 80; ++i) d.y[i] += rng.normal();
    const glm::GlmFamily fam = glm::GlmFamily::gaussian(1.0, true);
    const auto fit = glm::irls_mle(fam, d);

    const auto flat = [](const Eigen::VectorXd&) { return 0.0; };
    // m(theta_hat) = 0: the quadratic form is zero, so the density equals
    // -0.5 log |W| exactly
    const Eigen::MatrixXd s = glm::score_contributions(fam, d, fit.coef);
    CHECK(s.colwise().sum().norm() < 1e-6);

    // gaussian with known variance and flat prior: the Q-posterior mode is the MLE
    const double at_mle = restricted::q_posterior_logpdf(fit.coef, d, fam, flat);
    for (int k = 0; k < 20; ++k) {
        Eigen::Vector2d other = fit.coef + 0.3 * Eigen::Vector2d(rng.normal(), rng.normal());
        CHECK(restricted::q_posterior_logpdf(other, d, fam, flat) <= at_mle + 1e-9);
    }
}

TEST_CASE("q-posterior is invariant to data permutation") {
    RngStream rng(13);
    glm::GlmData d;
    d.Z.resize(40, 2);
    d.Z.col(0).setOnes();
    for (int i = 0; i < 40; ++i) d.Z(i, 1) = rng.normal();
    d.y = d.Z * Eigen::Vector2d(0.2, 0.5);
    for (int i = 0; i < 40; ++i) d.y[i] += rng.normal();
    glm::GlmData rev = d;
    rev.Z = d.Z.colwise().reverse();
    rev.y = d.y.reverse();
    const glm::GlmFamily fam = glm::GlmFamily::gaussian(1.0, true);
    const auto flat = [](const Eigen::VectorXd&) { return 0.0; };
    const Eigen::Vector2d theta(0.1, 0.7);
    CHECK(restricted::q_posterior_logpdf(theta, d, fam, flat) ==
          doctest::Approx(restricted::q_posterior_logpdf(theta, rev, fam, flat))
              .epsilon(1e-10));
}

TEST_CASE("brsl: standard variant with fresh pseudo-marginal draws mixes on theta") {
    // compatible toy: theta scalar, summary N(theta, 0.1^2); short smoke chain
    GenerativeModel model = registry::gaussian_toy(Eigen::VectorXd::Constant(1, 0.1));
    BslConfig cfg;
    cfg.m = 20;
    cfg.variant = BslVariant::standard;
    mcmc::MhConfig mh;
    mh.iterations = 4000;
    mh.thin = 4;
    mh.proposal_cov = Eigen::MatrixXd::Constant(1, 1, 0.01);
    const auto prior = [](const Eigen::VectorXd& t) { return -0.5 * t.squaredNorm() / 100.0; };
    const auto chain = restricted::brsl_posterior(
        model, Eigen::VectorXd::Constant(1, 0.25), prior, cfg, mh,
        Eigen::VectorXd::Zero(1), RngStream(14));
    CHECK(chain.dim() == 1);
    CHECK(chain.acceptance_rate > 0.05);
    CHECK(std::abs(stats::mean(chain.col(0)) - 0.25) < 0.1);
}

}  // TEST_SUITE
