#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "misbayes/glm.hpp"
#include "misbayes/mcmc.hpp"
#include "misbayes/rng.hpp"

namespace misbayes::restricted {

// Simulator paired with a summary map of fixed output dimension.
struct GenerativeModel {
    std::function<Eigen::VectorXd(const Eigen::VectorXd& theta, RngStream&)> simulate;
    std::function<Eigen::VectorXd(const Eigen::VectorXd& dataset)> summary;
    int theta_dim = 0;
};

enum class AbcKernel { gaussian, uniform };
enum class AbcDistance { euclidean, mahalanobis_pilot };

struct AbcConfig {
    long m = 100;
    double epsilon = 1.0;  // kernel bandwidth (the ABC tolerance)
    AbcKernel kernel = AbcKernel::gaussian;
    AbcDistance distance = AbcDistance::euclidean;
    Eigen::MatrixXd pilot_cov;  // mahalanobis only, from >= d+2 pilot simulations

    void validate(int d) const;
};

enum class BslVariant { standard, mean_adjust, variance_inflate };

struct BslConfig {
    long m = 20;
    BslVariant variant = BslVariant::standard;
    double gamma_prior_scale = 0.5;  // Laplace scale / exponential mean for Gamma block

    void validate(int d) const;
};

// Elementwise clamp of a summary (or dataset) to [t1, t2].
Eigen::VectorXd censor_summary(const Eigen::VectorXd& y, double t1, double t2);

// Log of the kernel-averaged summary likelihood estimate. The gaussian kernel
// is evaluated up to its theta-independent normalizing constant; a uniform
// kernel with zero accepted simulations yields -inf.
double abc_loglik(const Eigen::VectorXd& theta, const Eigen::VectorXd& s_obs,
                  const GenerativeModel& model, const AbcConfig& cfg, RngStream rng);

struct BslMoments {
    Eigen::VectorXd mu;     // sample mean of m simulated summaries
    Eigen::MatrixXd sigma;  // sample covariance, 1/m normalization
};
BslMoments bsl_moments(const Eigen::VectorXd& theta, const GenerativeModel& model, long m,
                       RngStream rng);

// Gaussian synthetic log-likelihood of s_obs under the simulated moments.
double bsl_loglik(const Eigen::VectorXd& theta, const Eigen::VectorXd& s_obs,
                  const GenerativeModel& model, const BslConfig& cfg, RngStream rng);

// Robust BSL with the auxiliary Gamma vector: mean adjustment mu + sd .* Gamma,
// or variance inflation Sigma + Sigma^1/2 diag(Gamma) Sigma^1/2.
double rbsl_loglik(const Eigen::VectorXd& theta, const Eigen::VectorXd& gamma,
                   const Eigen::VectorXd& s_obs, const GenerativeModel& model,
                   const BslConfig& cfg, RngStream rng);

// Pseudo-marginal MH over (theta, Gamma) for the robust variants, or theta only
// for the standard variant. Each target evaluation simulates m fresh datasets on
// a dedicated child stream. Repeated degeneracy (>1% of evaluations) aborts.
mcmc::Chain brsl_posterior(const GenerativeModel& model, const Eigen::VectorXd& s_obs,
                           const mcmc::LogTargetFn& logprior_theta, const BslConfig& cfg,
                           const mcmc::MhConfig& mh, const Eigen::VectorXd& theta_init,
                           RngStream rng);

// Log-kernel of the Q-posterior: |W|^(-1/2) exp(-1/2 (m/sqrt n)' W^-1 (m/sqrt n)) pi,
// with m the negative score and W the centered covariance of the per-observation
// score contributions.
double q_posterior_logpdf(const Eigen::VectorXd& theta, const glm::GlmData& data,
                          const glm::GlmFamily& family,
                          const mcmc::LogTargetFn& logprior_theta);

}  // namespace misbayes::restricted
