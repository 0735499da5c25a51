#include "misbayes/mcmc.hpp"

#include <algorithm>
#include <cmath>

#include "misbayes/errors.hpp"
#include "misbayes/linalg.hpp"
#include "misbayes/stats.hpp"

namespace misbayes::mcmc {

void MhConfig::validate(int dim) const {
    if (iterations < 1) throw ContractError("MhConfig: iterations must be >= 1");
    if (thin < 1) throw ContractError("MhConfig: thin must be >= 1");
    if (burn_in < 0 || burn_in >= iterations)
        throw ContractError("MhConfig: burn_in must lie in [0, iterations)");
    if (proposal_cov.rows() != dim || proposal_cov.cols() != dim)
        throw ContractError("MhConfig: proposal covariance dimension mismatch");
}

Eigen::MatrixXd default_proposal(const Eigen::MatrixXd& scale_matrix) {
    const double d = static_cast<double>(scale_matrix.rows());
    return (2.38 * 2.38 / d) * scale_matrix;
}

Eigen::VectorXd Chain::col(const std::string& name) const {
    for (std::size_t j = 0; j < names.size(); ++j)
        if (names[j] == name) return draws.col(static_cast<Eigen::Index>(j));
    throw ContractError("Chain has no column named '" + name + "'");
}

Chain rw_metropolis(const LogTargetFn& log_target, const Eigen::VectorXd& init,
                    const MhConfig& cfg, const RngStream& rng,
                    std::vector<std::string> names) {
    const int d = static_cast<int>(init.size());
    cfg.validate(d);
    RngStream stream = rng.descend(cfg.seed_path);

    double current_lt = log_target(init);
    if (!std::isfinite(current_lt))
        throw InitError("rw_metropolis: log target not finite at the starting point");

    const Eigen::MatrixXd l = linalg::chol_lower(cfg.proposal_cov);
    const long kept = (cfg.iterations - cfg.burn_in) / cfg.thin;

    Chain chain;
    chain.draws.resize(kept, d);
    chain.log_target.resize(kept);
    chain.config = cfg;
    if (names.empty())
        for (int j = 0; j < d; ++j) names.push_back("p" + std::to_string(j));
    chain.names = std::move(names);

    Eigen::VectorXd current = init;
    Eigen::VectorXd z(d), proposal(d);
    long accepted = 0;
    long stored = 0;
    for (long t = 1; t <= cfg.iterations; ++t) {
        for (int j = 0; j < d; ++j) z[j] = stream.normal();
        proposal = current + l * z;
        const double prop_lt = log_target(proposal);
        if (std::isfinite(prop_lt) &&
            std::log(stream.uniform()) < prop_lt - current_lt) {
            current = proposal;
            current_lt = prop_lt;
            ++accepted;
        }
        if (t > cfg.burn_in && (t - cfg.burn_in) % cfg.thin == 0 && stored < kept) {
            chain.draws.row(stored) = current.transpose();
            chain.log_target[stored] = current_lt;
            ++stored;
        }
    }
    chain.acceptance_rate =
        static_cast<double>(accepted) / static_cast<double>(cfg.iterations);
    return chain;
}

std::vector<CoordSummary> summarize(const Chain& chain) {
    if (chain.size() < 10) throw ContractError("summarize: chain too short (need T >= 10)");
    std::vector<CoordSummary> out;
    out.reserve(chain.dim());
    for (int j = 0; j < chain.dim(); ++j) {
        const Eigen::VectorXd x = chain.col(j);
        CoordSummary s;
        s.name = j < static_cast<int>(chain.names.size()) ? chain.names[j] : "";
        s.mean = stats::mean(x);
        const double v = stats::variance(x);
        s.sd = std::sqrt(std::max(v, 0.0));
        s.lo95 = stats::quantile(x, 0.025);
        s.hi95 = stats::quantile(x, 0.975);
        s.ess = stats::ess(x);
        out.push_back(s);
    }
    return out;
}

double kl_gauss_moment(const Eigen::MatrixXd& draws_p, const Eigen::MatrixXd& draws_q) {
    if (draws_p.cols() != draws_q.cols())
        throw ContractError("kl_gauss_moment: dimension mismatch");
    const auto d = draws_p.cols();
    if (draws_p.rows() < 10 * d || draws_q.rows() < 10 * d)
        throw ContractError("kl_gauss_moment: need at least 10*d draws per chain");
    const Eigen::VectorXd mp = linalg::col_mean(draws_p);
    const Eigen::VectorXd mq = linalg::col_mean(draws_q);
    const Eigen::MatrixXd sp = linalg::sample_cov(draws_p);
    const Eigen::MatrixXd sq = linalg::sample_cov(draws_q);
    Eigen::LLT<Eigen::MatrixXd> llt_q(sq);
    if (llt_q.info() != Eigen::Success)
        throw DegeneracyError("kl_gauss_moment: singular fitted covariance (q)");
    Eigen::LLT<Eigen::MatrixXd> llt_p(sp);
    if (llt_p.info() != Eigen::Success)
        throw DegeneracyError("kl_gauss_moment: singular fitted covariance (p)");
    const Eigen::MatrixXd sqinv_sp = llt_q.solve(sp);
    const Eigen::VectorXd delta = mq - mp;
    const double logdet_q =
        2.0 * Eigen::MatrixXd(llt_q.matrixL()).diagonal().array().log().sum();
    const double logdet_p =
        2.0 * Eigen::MatrixXd(llt_p.matrixL()).diagonal().array().log().sum();
    const double kl = 0.5 * (sqinv_sp.trace() + delta.dot(llt_q.solve(delta)) -
                             static_cast<double>(d) + logdet_q - logdet_p);
    return std::max(kl, 0.0);
}

double kl_gauss_moment(const Chain& p, const Chain& q) {
    return kl_gauss_moment(p.draws, q.draws);
}

}  // namespace misbayes::mcmc
