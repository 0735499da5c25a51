#include "misbayes/restricted.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "misbayes/dist.hpp"
#include "misbayes/errors.hpp"
#include "misbayes/linalg.hpp"

namespace misbayes::restricted {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

Eigen::MatrixXd simulate_summaries(const Eigen::VectorXd& theta,
                                   const GenerativeModel& model, long m, RngStream& rng) {
    Eigen::MatrixXd s;
    for (long i = 0; i < m; ++i) {
        RngStream sub = rng.child(static_cast<std::uint64_t>(i));
        const Eigen::VectorXd si = model.summary(model.simulate(theta, sub));
        if (s.size() == 0) s.resize(m, si.size());
        if (si.size() != s.cols())
            throw ContractError("summary dimension changed across simulations");
        s.row(i) = si.transpose();
    }
    return s;
}

double gauss_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mu,
                    const Eigen::MatrixXd& sigma) {
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) {
        // name the most collapsed direction for the error message
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
        int idx = 0;
        const double ev = es.eigenvalues().minCoeff(&idx);
        int coord = 0;
        es.eigenvectors().col(idx).cwiseAbs().maxCoeff(&coord);
        throw DegeneracyError("singular simulated summary covariance (direction dominated "
                              "by coordinate " + std::to_string(coord) + ")", ev, coord);
    }
    const Eigen::VectorXd w = llt.matrixL().solve(x - mu);
    const double logdet =
        2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
    return -0.5 * (static_cast<double>(x.size()) * kLog2Pi + logdet + w.squaredNorm());
}

}  // namespace

void AbcConfig::validate(int d) const {
    if (m < 1) throw ContractError("AbcConfig: m must be >= 1");
    if (!(epsilon > 0.0)) throw ContractError("AbcConfig: epsilon must be positive");
    if (distance == AbcDistance::mahalanobis_pilot) {
        if (pilot_cov.rows() != d || pilot_cov.cols() != d)
            throw ContractError("AbcConfig: pilot covariance must be d x d");
        linalg::check_spd(pilot_cov);
    }
}

void BslConfig::validate(int d) const {
    // m >= d+1 keeps the 1/m-normalized covariance invertible; samplers apply
    // the stricter d+2 margin up front
    if (m < std::max(2, d + 1))
        throw ContractError("BslConfig: need m >= d + 1 simulations");
    if (!(gamma_prior_scale > 0.0))
        throw ContractError("BslConfig: gamma_prior_scale must be positive");
}

Eigen::VectorXd censor_summary(const Eigen::VectorXd& y, double t1, double t2) {
    if (!(t1 < t2)) throw ContractError("censor_summary: need t1 < t2");
    return y.cwiseMax(t1).cwiseMin(t2);
}

double abc_loglik(const Eigen::VectorXd& theta, const Eigen::VectorXd& s_obs,
                  const GenerativeModel& model, const AbcConfig& cfg, RngStream rng) {
    const int d = static_cast<int>(s_obs.size());
    cfg.validate(d);
    const Eigen::MatrixXd sims = simulate_summaries(theta, model, cfg.m, rng);
    if (sims.cols() != d) throw ContractError("abc_loglik: summary dimension mismatch");

    Eigen::LLT<Eigen::MatrixXd> pilot;
    if (cfg.distance == AbcDistance::mahalanobis_pilot) pilot.compute(cfg.pilot_cov);

    Eigen::VectorXd rho(cfg.m);
    for (long i = 0; i < cfg.m; ++i) {
        const Eigen::VectorXd diff = s_obs - sims.row(i).transpose();
        rho[i] = cfg.distance == AbcDistance::euclidean
                     ? diff.norm()
                     : std::sqrt(diff.dot(pilot.solve(diff)));
    }
    if (cfg.kernel == AbcKernel::uniform) {
        const long accepted = (rho.array() <= cfg.epsilon).count();
        if (accepted == 0) return kNegInf;
        return std::log(static_cast<double>(accepted) / static_cast<double>(cfg.m));
    }
    // gaussian kernel up to its theta-independent constant; log-sum-exp for stability
    const Eigen::ArrayXd logk = -0.5 * (rho.array() / cfg.epsilon).square();
    const double mx = logk.maxCoeff();
    return mx + std::log((logk - mx).exp().sum() / static_cast<double>(cfg.m));
}

BslMoments bsl_moments(const Eigen::VectorXd& theta, const GenerativeModel& model, long m,
                       RngStream rng) {
    const Eigen::MatrixXd sims = simulate_summaries(theta, model, m, rng);
    BslMoments mo;
    mo.mu = sims.colwise().mean();
    const Eigen::MatrixXd centered = sims.rowwise() - mo.mu.transpose();
    mo.sigma = centered.transpose() * centered / static_cast<double>(m);
    return mo;
}

double bsl_loglik(const Eigen::VectorXd& theta, const Eigen::VectorXd& s_obs,
                  const GenerativeModel& model, const BslConfig& cfg, RngStream rng) {
    cfg.validate(static_cast<int>(s_obs.size()));
    const BslMoments mo = bsl_moments(theta, model, cfg.m, rng);
    if (mo.mu.size() != s_obs.size()) throw ContractError("bsl_loglik: dimension mismatch");
    return gauss_logpdf(s_obs, mo.mu, mo.sigma);
}

double rbsl_loglik(const Eigen::VectorXd& theta, const Eigen::VectorXd& gamma,
                   const Eigen::VectorXd& s_obs, const GenerativeModel& model,
                   const BslConfig& cfg, RngStream rng) {
    const int d = static_cast<int>(s_obs.size());
    cfg.validate(d);
    if (gamma.size() != d) throw ContractError("rbsl_loglik: Gamma dimension mismatch");
    if (cfg.variant == BslVariant::variance_inflate && (gamma.array() < 0.0).any())
        throw ContractError("rbsl_loglik: variance inflation requires gamma_i >= 0");
    const BslMoments mo = bsl_moments(theta, model, cfg.m, rng);

    switch (cfg.variant) {
        case BslVariant::standard:
            return gauss_logpdf(s_obs, mo.mu, mo.sigma);
        case BslVariant::mean_adjust: {
            const Eigen::VectorXd sd = mo.sigma.diagonal().cwiseMax(0.0).cwiseSqrt();
            const Eigen::VectorXd mu = mo.mu + sd.cwiseProduct(gamma);
            return gauss_logpdf(s_obs, mu, mo.sigma);
        }
        case BslVariant::variance_inflate: {
            const Eigen::MatrixXd root = linalg::spd_sqrt(mo.sigma);
            const Eigen::MatrixXd sigma =
                mo.sigma + root * gamma.asDiagonal() * root;
            return gauss_logpdf(s_obs, mo.mu, sigma);
        }
    }
    throw ContractError("unknown BSL variant");
}

mcmc::Chain brsl_posterior(const GenerativeModel& model, const Eigen::VectorXd& s_obs,
                           const mcmc::LogTargetFn& logprior_theta, const BslConfig& cfg,
                           const mcmc::MhConfig& mh, const Eigen::VectorXd& theta_init,
                           RngStream rng) {
    const int d = static_cast<int>(s_obs.size());
    const int td = static_cast<int>(theta_init.size());
    cfg.validate(d);
    if (cfg.m < d + 2)
        throw ContractError("brsl_posterior: need m >= d + 2 simulations");
    const bool with_gamma = cfg.variant != BslVariant::standard;
    const int dim = with_gamma ? td + d : td;

    // gamma priors: Laplace(0, scale) for mean adjustment, Exponential(1/scale)
    // for variance inflation (support gamma_i >= 0)
    const double b = cfg.gamma_prior_scale;
    auto log_gamma_prior = [&](const Eigen::VectorXd& g) {
        if (cfg.variant == BslVariant::mean_adjust)
            return -static_cast<double>(d) * std::log(2.0 * b) - g.cwiseAbs().sum() / b;
        if ((g.array() < 0.0).any()) return kNegInf;
        return -static_cast<double>(d) * std::log(b) - g.sum() / b;
    };

    // pseudo-marginal target: fresh simulations per evaluation on a child stream
    auto counters = std::make_shared<std::pair<long, long>>(0, 0);  // evals, degeneracies
    RngStream sim_root = rng.child(0);
    auto target = [=](const Eigen::VectorXd& x) {
        const Eigen::VectorXd theta = x.head(td);
        double lp = logprior_theta(theta);
        if (!std::isfinite(lp)) return kNegInf;
        Eigen::VectorXd gamma = Eigen::VectorXd::Zero(d);
        if (with_gamma) {
            gamma = x.tail(d);
            lp += log_gamma_prior(gamma);
            if (!std::isfinite(lp)) return kNegInf;
        }
        RngStream eval_stream = sim_root.child(static_cast<std::uint64_t>(counters->first++));
        try {
            return lp + rbsl_loglik(theta, gamma, s_obs, model, cfg, eval_stream);
        } catch (const std::runtime_error&) {
            // degenerate moments or a failed summary fit both void this estimate
            ++counters->second;
            if (counters->first > 100 &&
                counters->second * 100 > counters->first)
                throw DegeneracyError("brsl_posterior: more than 1% of synthetic likelihood "
                                      "evaluations were degenerate (" +
                                      std::to_string(counters->second) + "/" +
                                      std::to_string(counters->first) + ")");
            return kNegInf;
        }
    };

    Eigen::VectorXd init(dim);
    init.head(td) = theta_init;
    if (with_gamma)
        init.tail(d) = cfg.variant == BslVariant::variance_inflate
                           ? Eigen::VectorXd::Constant(d, 0.1 * b)
                           : Eigen::VectorXd::Zero(d);

    std::vector<std::string> names;
    for (int j = 0; j < td; ++j) names.push_back("theta_" + std::to_string(j + 1));
    if (with_gamma)
        for (int j = 0; j < d; ++j) names.push_back("gamma_" + std::to_string(j + 1));

    return mcmc::rw_metropolis(target, init, mh, rng.child(1), std::move(names));
}

double q_posterior_logpdf(const Eigen::VectorXd& theta, const glm::GlmData& data,
                          const glm::GlmFamily& family,
                          const mcmc::LogTargetFn& logprior_theta) {
    const long n = data.n();
    if (n <= data.p()) throw ContractError("q_posterior_logpdf: need n > p");
    const Eigen::MatrixXd s = glm::score_contributions(family, data, theta);
    const Eigen::VectorXd m = -s.colwise().sum();
    const Eigen::MatrixXd centered = s.rowwise() - s.colwise().mean();
    const Eigen::MatrixXd w = centered.transpose() * centered / static_cast<double>(n);
    Eigen::LLT<Eigen::MatrixXd> llt(w);
    if (llt.info() != Eigen::Success)
        throw DegeneracyError("q_posterior_logpdf: singular score covariance W");
    const Eigen::VectorXd mn = m / std::sqrt(static_cast<double>(n));
    const double logdet =
        2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
    return -0.5 * logdet - 0.5 * mn.dot(llt.solve(mn)) + logprior_theta(theta);
}

}  // namespace misbayes::restricted
