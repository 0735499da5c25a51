#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "misbayes/rng.hpp"

namespace misbayes::mcmc {

using LogTargetFn = std::function<double(const Eigen::VectorXd&)>;

struct MhConfig {
    long iterations = 50000;
    Eigen::MatrixXd proposal_cov;  // SPD, dimension = parameter dimension
    long thin = 1;
    long burn_in = 0;  // none by default
    std::vector<std::uint64_t> seed_path{};

    void validate(int dim) const;  // throws ContractError
};

// Scaled proposal covariance 2.38^2/d times a parameter-scale matrix.
Eigen::MatrixXd default_proposal(const Eigen::MatrixXd& scale_matrix);

struct Chain {
    Eigen::MatrixXd draws;       // T x d, post burn-in and thinning
    Eigen::VectorXd log_target;  // length T
    double acceptance_rate = 0.0;
    std::vector<std::string> names;
    MhConfig config;

    long size() const { return draws.rows(); }
    int dim() const { return static_cast<int>(draws.cols()); }
    Eigen::VectorXd col(int j) const { return draws.col(j); }
    Eigen::VectorXd col(const std::string& name) const;
};

// Random-walk Metropolis-Hastings with a multivariate normal proposal.
// Non-finite proposal evaluations are rejected and never stored; a non-finite
// target at init raises InitError. Draws consume rng.descend(cfg.seed_path).
Chain rw_metropolis(const LogTargetFn& log_target, const Eigen::VectorXd& init,
                    const MhConfig& cfg, const RngStream& rng,
                    std::vector<std::string> names = {});

struct CoordSummary {
    std::string name;
    double mean, sd, lo95, hi95, ess;
};
std::vector<CoordSummary> summarize(const Chain& chain);

// KL divergence between moment-matched Gaussians fitted to two chains.
double kl_gauss_moment(const Chain& p, const Chain& q);
double kl_gauss_moment(const Eigen::MatrixXd& draws_p, const Eigen::MatrixXd& draws_q);

}  // namespace misbayes::mcmc
