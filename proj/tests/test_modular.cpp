#include <doctest.h>

#include <cmath>

#include "misbayes/errors.hpp"
#include "misbayes/modular.hpp"
#include "misbayes/stats.hpp"
#include "oracles.hpp"

using namespace misbayes;
using modular::CutConfig;
using modular::RandomEffectsModel;
using modular::ReData;
using modular::ReSimSpec;
using modular::SmpConfig;

namespace {

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

mcmc::MhConfig exact_cfg_for(const RandomEffectsModel& model, long iters, long thin) {
    mcmc::MhConfig cfg;
    cfg.iterations = iters;
    cfg.thin = thin;
    cfg.proposal_cov = modular::re_default_exact_proposal(model);
    return cfg;
}

// quadrature of the printed (psi^2, phi^2) marginal for N = 1, on log grids
struct ReQuadrature {
    double zbar, s2;
    long j;

    double logdens(double t, double u) const {
        const double psi2 = std::exp(t), phi2 = std::exp(u);
        const double a = 0.5 * (static_cast<double>(j) - 1.0);
        const double tau = psi2 + phi2 / static_cast<double>(j);
        return -std::log(tau) - a * u - s2 / (2.0 * phi2) - 0.5 * std::log(tau) -
               zbar * zbar / (2.0 * tau) + t + u;  // jacobians
    }

    // posterior expectation of g(phi^2)
    double expect(const std::function<double(double)>& g) const {
        const int n = 700;
        const double lo = -14.0, hi = 14.0;
        const double h = (hi - lo) / (n - 1);
        double num = 0.0, den = 0.0;
        for (int it = 0; it < n; ++it)
            for (int iu = 0; iu < n; ++iu) {
                const double t = lo + it * h, u = lo + iu * h;
                const double w = std::exp(logdens(t, u));
                den += w;
                num += w * g(std::exp(u));
            }
        return num / den;
    }
};

}  // namespace

TEST_SUITE("modular") {

TEST_CASE("sufficient statistics by hand") {
    Eigen::MatrixXd z(2, 3);
    z << 5.0, 5.0, 5.0,
         0.0, 2.0, 4.0;
    const ReData d = modular::sufficient_stats(z);
    CHECK(d.zbar[0] == doctest::Approx(5.0));
    CHECK(d.s2[0] == doctest::Approx(0.0));
    CHECK(d.zbar[1] == doctest::Approx(2.0));
    CHECK(d.s2[1] == doctest::Approx(8.0));

    Eigen::MatrixXd row(1, 2);
    row << 0.0, 2.0;
    const ReData r = modular::sufficient_stats(row);
    CHECK(r.zbar[0] == doctest::Approx(1.0));
    CHECK(r.s2[0] == doctest::Approx(2.0));
}

TEST_CASE("sufficient statistics reconstruct the gaussian log-likelihood") {
    RngStream rng(1);
    ReSimSpec spec;
    spec.N = 4;
    spec.J = 6;
    spec.override_beta1 = false;
    const Eigen::MatrixXd z = modular::simulate_re_data(spec, rng);
    const ReData d = modular::sufficient_stats(z);

    // full-data gaussian loglik vs its sufficient-statistic form, as functions
    // of (beta_i, phi_i^2); theta-independent constants cancel in differences
    auto full = [&](const Eigen::VectorXd& beta, const Eigen::VectorXd& phi2) {
        double lp = 0.0;
        for (long i = 0; i < spec.N; ++i)
            for (long jj = 0; jj < spec.J; ++jj)
                lp += -0.5 * std::log(phi2[i]) -
                      0.5 * (z(i, jj) - beta[i]) * (z(i, jj) - beta[i]) / phi2[i];
        return lp;
    };
    auto suff = [&](const Eigen::VectorXd& beta, const Eigen::VectorXd& phi2) {
        double lp = 0.0;
        const double jd = static_cast<double>(spec.J);
        for (long i = 0; i < spec.N; ++i) {
            lp += -0.5 * std::log(phi2[i] / jd) -
                  0.5 * (d.zbar[i] - beta[i]) * (d.zbar[i] - beta[i]) / (phi2[i] / jd);
            // Gamma((J-1)/2, 1/(2 phi^2)) term in s^2
            lp += -0.5 * (jd - 1.0) * std::log(phi2[i]) - d.s2[i] / (2.0 * phi2[i]);
        }
        return lp;
    };
    RngStream r2(2);
    Eigen::VectorXd b1(4), b2(4), p1(4), p2(4);
    for (int i = 0; i < 4; ++i) {
        b1[i] = r2.normal();
        b2[i] = r2.normal();
        p1[i] = 0.3 + r2.gamma(2.0);
        p2[i] = 0.3 + r2.gamma(2.0);
    }
    CHECK(full(b1, p1) - full(b2, p2) ==
          doctest::Approx(suff(b1, p1) - suff(b2, p2)).epsilon(1e-9));
}

TEST_CASE("beta conditional matches numeric integration") {
    const double zbar = 1.3, psi2 = 2.0, phi2 = 0.5;
    const double jd = 10.0;
    auto dens = [&](double b) {
        return std::exp(-0.5 * (zbar - b) * (zbar - b) / (phi2 / jd) -
                        0.5 * b * b / psi2);
    };
    const double z0 = oracles::trapezoid(dens, -10.0, 10.0, 200001);
    const double mean =
        oracles::trapezoid([&](double b) { return b * dens(b); }, -10.0, 10.0, 200001) / z0;
    const double m2 =
        oracles::trapezoid([&](double b) { return b * b * dens(b); }, -10.0, 10.0, 200001) /
        z0;

    const double prec = jd / phi2 + 1.0 / psi2;
    const double omega = (jd / phi2) / prec;
    CHECK(mean == doctest::Approx(omega * zbar).epsilon(1e-8));
    CHECK(m2 - mean * mean == doctest::Approx(1.0 / prec).epsilon(1e-6));
}

TEST_CASE("shrinkage weight goes to one as psi^2 grows") {
    const double jd = 10.0, phi2 = 0.5;
    for (double psi2 : {1e2, 1e4, 1e6}) {
        const double omega = (jd / phi2) / (jd / phi2 + 1.0 / psi2);
        CHECK(omega > 1.0 - 1e-2 * (1e2 / psi2 + 1.0));
    }
    CHECK((jd / phi2) / (jd / phi2 + 1.0 / 1e6) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("cut posterior closed form: inverse-gamma mean s^2/(J-3)") {
    // J = 10, s1^2 = 4.5: cut mean of phi_1^2 = 4.5/7
    RandomEffectsModel model;
    model.N = 1;
    model.J = 10;
    ReData d;
    d.zbar = Eigen::VectorXd::Constant(1, 0.2);
    d.s2 = Eigen::VectorXd::Constant(1, 4.5);

    // quadrature of the printed cut density against the analytic mean
    auto cut_dens = [&](double phi2) {
        return std::pow(phi2, -(10.0 + 1.0) / 2.0) * std::exp(-4.5 / (2.0 * phi2));
    };
    const double z0 = oracles::trapezoid(cut_dens, 1e-4, 400.0, 400001);
    const double qmean =
        oracles::trapezoid([&](double p) { return p * cut_dens(p); }, 1e-4, 400.0, 400001) /
        z0;
    CHECK(qmean == doctest::Approx(4.5 / 7.0).epsilon(1e-4));

    // Monte Carlo self-check of the exact sampler
    const auto chain = modular::re_cut_exact_sampler(model, d, 100000, RngStream(3));
    const Eigen::VectorXd phi2 = chain.col("phi2_1");
    const double mc_se = stats::sd(phi2) / std::sqrt(100000.0);
    CHECK(std::abs(phi2.mean() - 4.5 / 7.0) < 3.0 * mc_se);
}

TEST_CASE("degenerate group raises an error") {
    RandomEffectsModel model;
    model.N = 2;
    model.J = 5;
    ReData d;
    d.zbar = Eigen::Vector2d(0.0, 1.0);
    d.s2 = Eigen::Vector2d(2.0, 0.0);
    CHECK_THROWS_AS(modular::re_cut_exact_sampler(model, d, 10, RngStream(4)),
                    DegeneracyError);
}

TEST_CASE("psi^2 grid inverse-CDF matches a long MH chain (KS < 0.02)") {
    RngStream rng(5);
    ReSimSpec spec;
    spec.N = 8;
    spec.J = 10;
    spec.override_beta1 = false;
    const ReData d = modular::sufficient_stats(modular::simulate_re_data(spec, rng));
    RandomEffectsModel model;
    model.N = spec.N;
    model.J = spec.J;

    // freeze one phi^2 draw, then sample psi^2 | zbar, phi two ways
    const Eigen::VectorXd phi2 = Eigen::VectorXd::Constant(8, 0.5);
    const modular::TwoModuleModel tm = modular::re_two_module(model, d);

    // route 1: many exact-draw calls (each draws psi^2 from the grid CDF)
    RngStream grid_rng(6);
    const int n = 10000;
    Eigen::VectorXd grid_draws(n);
    const Eigen::VectorXd u = phi2.array().log();
    for (int i = 0; i < n; ++i) grid_draws[i] = std::exp(tm.zeta_exact_draw(u, grid_rng)[0]);

    // route 2: MH on the same 1-d density (beta integrated out) in log psi^2
    auto marg = [&](const Eigen::VectorXd& t) {
        const double psi2v = std::exp(t[0]);
        const double jd = 10.0;
        double lp = -std::log(psi2v + phi2.mean() / jd) + t[0];
        for (int i = 0; i < 8; ++i) {
            const double tau = psi2v + phi2[i] / jd;
            lp += -0.5 * std::log(tau) - 0.5 * d.zbar[i] * d.zbar[i] / tau;
        }
        return lp;
    };

    mcmc::MhConfig cfg;
    cfg.iterations = 400000;
    cfg.thin = 40;
    cfg.proposal_cov = Eigen::MatrixXd::Constant(1, 1, 0.8);
    const auto chain =
        mcmc::rw_metropolis(marg, Eigen::VectorXd::Zero(1), cfg, RngStream(7));
    Eigen::VectorXd mh_draws = chain.col(0).array().exp();
    CHECK(stats::ks_two_sample(grid_draws, mh_draws) < 0.02);
}

TEST_CASE("N=1 micro-instance: exact posterior moments vs 2-d quadrature") {
    // The J=2 instance has a finite posterior mean for phi_1 but not for
    // phi_1^2 (the marginal tail is (phi^2)^-2), so the first-moment check
    // runs at J=2 on phi_1 and the second at J=5 on phi_1^2.
    SUBCASE("J=2, posterior mean of phi_1") {
        RandomEffectsModel model{1, 2, false};
        ReData d;
        d.zbar = Eigen::VectorXd::Constant(1, 0.8);
        d.s2 = Eigen::VectorXd::Constant(1, 1.7);
        ReQuadrature quad{d.zbar[0], d.s2[0], 2};
        const double oracle = quad.expect([](double p) { return std::sqrt(p); });
        const auto chain =
            modular::re_exact_posterior(model, d, exact_cfg_for(model, 400000, 20),
                                        RngStream(8));
        const Eigen::VectorXd phi1 = chain.col("phi2_1").array().sqrt();
        const double se = stats::sd(phi1) / std::sqrt(stats::ess(phi1));
        CHECK(std::abs(phi1.mean() - oracle) < 3.0 * se);
    }
    SUBCASE("J=5, posterior mean of phi_1^2") {
        RandomEffectsModel model{1, 5, false};
        ReData d;
        d.zbar = Eigen::VectorXd::Constant(1, 0.8);
        d.s2 = Eigen::VectorXd::Constant(1, 2.4);
        ReQuadrature quad{d.zbar[0], d.s2[0], 5};
        const double oracle = quad.expect([](double p) { return p; });
        const auto chain =
            modular::re_exact_posterior(model, d, exact_cfg_for(model, 400000, 20),
                                        RngStream(9));
        const Eigen::VectorXd phi2 = chain.col("phi2_1");
        const double se = stats::sd(phi2) / std::sqrt(stats::ess(phi2));
        CHECK(std::abs(phi2.mean() - oracle) < 3.0 * se);
    }
}

TEST_CASE("stage-1 cut draws never read module-2 data") {
    RngStream rng(10);
    ReSimSpec spec;
    spec.N = 6;
    spec.J = 8;
    spec.override_beta1 = false;
    const Eigen::MatrixXd z = modular::simulate_re_data(spec, rng);
    const ReData d1 = modular::sufficient_stats(z);
    ReData d2 = d1;
    d2.zbar = d1.zbar.array() + 25.0;  // perturb Y = zbar only

    RandomEffectsModel model{6, 8, false};
    CutConfig cc;
    cc.outer_draws = 200;
    cc.stage1_thin = 5;
    cc.stage1_burn_in = 100;
    cc.inner_iterations = 40;
    const auto r1 = modular::re_cut_nested(model, d1, cc, RngStream(11));
    const auto r2 = modular::re_cut_nested(model, d2, cc, RngStream(11));
    CHECK(r1.skipped == 0);
    CHECK(r2.skipped == 0);
    // phi^2 block identical bit for bit; the zeta block differs
    const Eigen::MatrixXd p1 = r1.chain.draws.rightCols(6);
    const Eigen::MatrixXd p2 = r2.chain.draws.rightCols(6);
    CHECK((p1 - p2).cwiseAbs().maxCoeff() == 0.0);
    CHECK((r1.chain.draws.col(0) - r2.chain.draws.col(0)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("nested cut agrees with the closed-form sampler (reduced size)") {
    RngStream rng(12);
    ReSimSpec spec;
    spec.N = 20;
    spec.J = 10;
    const ReData d = modular::sufficient_stats(modular::simulate_re_data(spec, rng));
    RandomEffectsModel model{20, 10, false};
    CutConfig cc;
    cc.outer_draws = 2000;
    cc.stage1_thin = 40;
    cc.stage1_burn_in = 4000;
    cc.inner_iterations = 150;
    const auto nested = modular::re_cut_nested(model, d, cc, RngStream(13));
    const auto exact = modular::re_cut_exact_sampler(model, d, 20000, RngStream(14));
    const double ks =
        stats::ks_two_sample(nested.chain.col("phi2_1"), exact.col("phi2_1"));
    CHECK(ks < 0.06);
}

TEST_CASE("conjugate micro model: nested cut matches hand-derived moments") {
    oracles::ConjugateTwoModule fixture;
    const modular::TwoModuleModel tm = fixture.model();
    CutConfig cc;
    cc.outer_draws = 8000;
    cc.stage1_thin = 10;
    cc.stage1_burn_in = 1000;
    cc.inner_iterations = 60;
    cc.stage1_proposal_cov = Eigen::MatrixXd::Constant(1, 1, 1.5);
    cc.inner_proposal_cov = Eigen::MatrixXd::Constant(1, 1, 1.0);
    const auto res = cut_posterior(tm, cc, Eigen::VectorXd::Zero(1),
                                   Eigen::VectorXd::Zero(1), RngStream(15));
    REQUIRE(res.skipped == 0);
    const Eigen::VectorXd phi = res.chain.draws.col(1);
    const Eigen::VectorXd zeta = res.chain.draws.col(0);

    double mc, vc;
    fixture.phi_power(0.0, mc, vc);
    double mz, vz;
    fixture.zeta_marginal(mc, vc, mz, vz);
    const double se_phi = stats::sd(phi) / std::sqrt(stats::ess(phi));
    CHECK(std::abs(phi.mean() - mc) < 3.5 * se_phi);
    CHECK(stats::variance(phi) == doctest::Approx(vc).epsilon(0.1));
    const double se_zeta = stats::sd(zeta) / std::sqrt(stats::ess(zeta));
    CHECK(std::abs(zeta.mean() - mz) < 3.5 * se_zeta);
    CHECK(stats::variance(zeta) == doctest::Approx(vz).epsilon(0.12));
}

TEST_CASE("conjugate micro model: power-SMP interpolates correctly") {
    oracles::ConjugateTwoModule fixture;
    const modular::TwoModuleModel tm = fixture.model();
    SmpConfig sc;
    sc.outer_iterations = 200000;
    sc.outer_thin = 20;
    sc.outer_burn_in = 2000;
    sc.outer_proposal_cov = mcmc::default_proposal(Eigen::Matrix2d::Identity());
    sc.inner_iterations = 60;
    sc.inner_proposal_cov = Eigen::MatrixXd::Constant(1, 1, 1.0);

    int seed = 16;
    for (double gamma : {1.0, 0.5, 1e-3}) {
        sc.gamma = gamma;
        const auto chain = modular::smp_power(tm, sc, Eigen::VectorXd::Zero(1),
                                              Eigen::VectorXd::Zero(1), RngStream(seed++));
        const Eigen::VectorXd phi = chain.draws.col(1);
        double m, v;
        fixture.phi_power(gamma, m, v);
        const double se = stats::sd(phi) / std::sqrt(stats::ess(phi));
        CHECK(std::abs(phi.mean() - m) < 3.5 * se);
        CHECK(stats::variance(phi) == doctest::Approx(v).epsilon(0.1));
    }

    // gamma = 0 delegates to the nested cut sampler
    sc.gamma = 0.0;
    const auto cut_chain = modular::smp_power(tm, sc, Eigen::VectorXd::Zero(1),
                                              Eigen::VectorXd::Zero(1), RngStream(20));
    double mc, vc;
    fixture.phi_power(0.0, mc, vc);
    const Eigen::VectorXd phi = cut_chain.draws.col(1);
    CHECK(std::abs(phi.mean() - mc) < 0.06);
    CHECK(stats::variance(phi) == doctest::Approx(vc).epsilon(0.1));
}

TEST_CASE("conjugate micro model: lin-SMP mixes cut and exact as printed") {
    oracles::ConjugateTwoModule fixture;
    const modular::TwoModuleModel tm = fixture.model();

    // closed-form iid chains for the two components
    RngStream rng(21);
    const long n = 20000;
    double mc, vc, me, ve;
    fixture.phi_power(0.0, mc, vc);
    fixture.phi_power(1.0, me, ve);
    auto gaussian_chain = [&](double m, double v, RngStream r) {
        mcmc::Chain c;
        c.draws.resize(n, 2);
        for (long i = 0; i < n; ++i) {
            const double phi = m + std::sqrt(v) * r.normal();
            double mz, vz_;
            fixture.zeta_given_phi(phi, mz, vz_);
            c.draws(i, 0) = mz + std::sqrt(vz_) * r.normal();
            c.draws(i, 1) = phi;
        }
        c.log_target = Eigen::VectorXd::Zero(n);
        c.names = {"zeta_1", "phi_1"};
        return c;
    };
    const mcmc::Chain cut_chain = gaussian_chain(mc, vc, rng.child(0));
    const mcmc::Chain exact_chain = gaussian_chain(me, ve, rng.child(1));

    // printed orientation: gamma = 1 reproduces the cut, gamma = 0 the exact
    const Eigen::MatrixXd inner_prop = Eigen::MatrixXd::Constant(1, 1, 1.0);
    const auto lin1 = modular::smp_linear(tm, cut_chain, exact_chain, 1.0, 10000, 60,
                                          inner_prop, RngStream(22));
    CHECK(stats::ks_two_sample(lin1.draws.col(1), cut_chain.draws.col(1)) < 0.03);
    const auto lin0 = modular::smp_linear(tm, cut_chain, exact_chain, 0.0, 10000, 60,
                                          inner_prop, RngStream(23));
    CHECK(stats::ks_two_sample(lin0.draws.col(1), exact_chain.draws.col(1)) < 0.03);

    // gamma = 0.5: the mixture CDF lies between the component CDFs
    const auto lin5 = modular::smp_linear(tm, cut_chain, exact_chain, 0.5, 20000, 60,
                                          inner_prop, RngStream(24));
    const Eigen::VectorXd phi5 = lin5.draws.col(1);
    for (double x : {0.2, 0.4, 0.6, 0.8}) {
        const double f_mix =
            static_cast<double>((phi5.array() <= x).count()) / phi5.size();
        const double f_cut = norm_cdf((x - mc) / std::sqrt(vc));
        const double f_exact = norm_cdf((x - me) / std::sqrt(ve));
        const double lo = std::min(f_cut, f_exact) - 0.02;
        const double hi = std::max(f_cut, f_exact) + 0.02;
        CHECK(f_mix > lo);
        CHECK(f_mix < hi);
    }
}

TEST_CASE("cut diagnostic: calibration separates contaminated data") {
    // replicate distribution of T under correct specification at small scale
    RandomEffectsModel model{5, 10, false};
    auto run_t = [&](bool contaminated, int seed) {
        RngStream rng(seed);
        ReSimSpec spec;
        spec.N = 5;
        spec.J = 10;
        spec.override_beta1 = contaminated;
        spec.beta1 = 10.0;
        const ReData d = modular::sufficient_stats(modular::simulate_re_data(spec, rng));
        return modular::re_cut_diagnostic(model, d, exact_cfg_for(model, 20000, 10), 4000,
                                          rng.child(99))
            .T;
    };
    std::vector<double> t_null;
    for (int r = 0; r < 40; ++r) t_null.push_back(run_t(false, 300 + r));
    Eigen::VectorXd tn = Eigen::Map<Eigen::VectorXd>(t_null.data(), 40);
    const double q90 = stats::quantile(tn, 0.9);
    const double t_contam = run_t(true, 999);
    CHECK(t_contam > q90);
    CHECK(stats::quantile(tn, 0.5) < q90);
}

TEST_CASE("experiment defaults echo the study configuration") {
    modular::ExperimentSpec spec;
    CHECK(spec.replicates == 100);
    CHECK(spec.sim.N == 100);
    CHECK(spec.sim.J == 10);
    CHECK(spec.sim.phi2 == doctest::Approx(0.5));
    CHECK(spec.sim.psi2 == doctest::Approx(2.0));
    CHECK(spec.sim.beta1 == doctest::Approx(10.0));
    CHECK(spec.sim.override_beta1);
}

TEST_CASE("experiment smoke run with failure accounting and lin-smp grid") {
    modular::ExperimentSpec spec;
    spec.replicates = 3;
    spec.sim.N = 12;
    spec.sim.J = 8;
    spec.methods = {"exact", "cut", "lin-smp"};
    spec.gamma_grid = {0.0, 1.0};
    spec.exact_iterations = 4000;
    spec.exact_thin = 4;
    spec.cut_draws = 1500;
    spec.workers = 2;
    const auto result = modular::repeated_sampling_experiment(spec, RngStream(42));
    CHECK(result.failures == 0);
    // 3 replicates x (exact + cut + 2 lin-smp gammas)
    CHECK(result.rows.size() == 3 * 4);
    CHECK(result.true_phi1 == doctest::Approx(std::sqrt(0.5)));
    // lin-smp at gamma=1 equals cut, at gamma=0 equals exact (mixture means)
    for (const auto& row : result.rows) {
        if (row.method != "lin-smp") continue;
        for (const auto& other : result.rows) {
            if (other.replicate != row.replicate) continue;
            if (row.gamma == 1.0 && other.method == "cut")
                CHECK(row.post_mean_phi1 == doctest::Approx(other.post_mean_phi1));
            if (row.gamma == 0.0 && other.method == "exact")
                CHECK(row.post_mean_phi1 == doctest::Approx(other.post_mean_phi1));
        }
    }
    // determinism: same seed, same workers count or not, identical rows
    auto spec2 = spec;
    spec2.workers = 1;
    const auto result2 = modular::repeated_sampling_experiment(spec2, RngStream(42));
    REQUIRE(result2.rows.size() == result.rows.size());
    for (std::size_t i = 0; i < result.rows.size(); ++i)
        CHECK(result.rows[i].post_mean_phi1 ==
              doctest::Approx(result2.rows[i].post_mean_phi1).epsilon(1e-15));
}

TEST_CASE("experiment validates its inputs before running") {
    modular::ExperimentSpec spec;
    spec.methods = {"bogus"};
    CHECK_THROWS_AS(modular::repeated_sampling_experiment(spec, RngStream(1)),
                    ContractError);
    modular::ExperimentSpec spec2;
    spec2.methods = {"smp"};
    CHECK_THROWS_AS(modular::repeated_sampling_experiment(spec2, RngStream(1)),
                    ContractError);
    modular::ExperimentSpec spec3;
    spec3.gamma_grid = {1.5};
    spec3.methods = {"lin-smp"};
    CHECK_THROWS_AS(modular::repeated_sampling_experiment(spec3, RngStream(1)),
                    ContractError);
}

}  // TEST_SUITE
