#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "misbayes/rng.hpp"

namespace misbayes::glm {

enum class Family { binomial_logit, gaussian_identity, poisson_log };

struct GlmFamily {
    Family kind = Family::gaussian_identity;
    double dispersion = 1.0;       // gaussian only; fixed to 1 for binomial/poisson
    bool dispersion_fixed = false; // if false, gaussian fits profile RSS/n

    static GlmFamily binomial() { return {Family::binomial_logit, 1.0, true}; }
    static GlmFamily gaussian(double dispersion = 1.0, bool fixed = false) {
        return {Family::gaussian_identity, dispersion, fixed};
    }
    static GlmFamily poisson() { return {Family::poisson_log, 1.0, true}; }
};

struct GlmData {
    Eigen::VectorXd y;       // response (counts or reals; working responses legal)
    Eigen::VectorXd trials;  // binomial only, one entry per row
    Eigen::MatrixXd Z;       // n x p design, first column typically the intercept
    std::vector<std::string> row_names;

    long n() const { return Z.rows(); }
    int p() const { return static_cast<int>(Z.cols()); }
    void validate(const GlmFamily& family) const;  // throws ContractError/DataError
};

struct GlmFit {
    Eigen::VectorXd coef;
    Eigen::MatrixXd cov;  // asymptotic covariance of coef
    bool converged = false;
    int iterations = 0;
    double dispersion = 1.0;
};

// Linear predictors are clipped at |eta| <= 30 before the inverse link;
// *saturated reports whether clipping occurred.
double loglik(const GlmFamily& family, const GlmData& data, const Eigen::VectorXd& beta,
              bool* saturated = nullptr);

// Analytic score and expected information at beta.
Eigen::VectorXd score(const GlmFamily& family, const GlmData& data,
                      const Eigen::VectorXd& beta);
Eigen::MatrixXd information(const GlmFamily& family, const GlmData& data,
                            const Eigen::VectorXd& beta);
// Per-observation score contributions (n x p); rows sum to score().
Eigen::MatrixXd score_contributions(const GlmFamily& family, const GlmData& data,
                                    const Eigen::VectorXd& beta);

// Fitted means E[y_i | beta] (binomial: trials_i * p_i).
Eigen::VectorXd fitted_means(const GlmFamily& family, const GlmData& data,
                             const Eigen::VectorXd& beta);

GlmFit irls_mle(const GlmFamily& family, const GlmData& data);

// Maximum likelihood with per-observation weights >= 0 (weighted IRLS).
GlmFit weighted_irls(const GlmFamily& family, const GlmData& data,
                     const Eigen::VectorXd& weights);

double huber_psi(double r, double c);

// Cantoni-Ronchetti robust quasi-likelihood estimator with Huber psi on Pearson
// residuals, identity covariate weights and the Fisher-consistency correction.
// Returns the estimate with its sandwich covariance.
GlmFit robust_mest(const GlmFamily& family, const GlmData& data, double huber_c);

// Coordinate-descent L1 fit on a working response (fitted means are legal),
// intercept unpenalized. KKT conditions are verified to 1e-6.
Eigen::VectorXd lasso_fit(const GlmFamily& family, const GlmData& data,
                          const Eigen::VectorXd& working_response, double lambda);

// Exact KL divergence of the n-observation product density from theta_from to
// theta_to; returns +inf when the target density has zero mass on the source.
double kl_glm(const GlmFamily& family, const GlmData& data,
              const Eigen::VectorXd& theta_from, const Eigen::VectorXd& theta_to);

// Robust (misspecification-consistent) covariance A^-1 B A^-1 at beta.
Eigen::MatrixXd sandwich_cov(const GlmFamily& family, const GlmData& data,
                             const Eigen::VectorXd& beta);

}  // namespace misbayes::glm
