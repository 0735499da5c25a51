#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>

#include "misbayes/glm.hpp"
#include "misbayes/restricted.hpp"

namespace misbayes::registry {

using SummaryFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// Independent gaussian coordinates: dataset_j ~ N(theta_j, sigma_j^2),
// identity summary by default.
restricted::GenerativeModel gaussian_toy(const Eigen::VectorXd& sigmas);

// Binomial GLM simulator on a fixed design; dataset is the response vector.
restricted::GenerativeModel glm_binomial(const glm::GlmData& design);

// Random effects generator with theta = (psi^2, phi^2); dataset is the
// flattened N x J matrix. Default summary: (variance of group means, mean of
// within-group variances).
restricted::GenerativeModel random_effects(long n_groups, long j_per_group);

SummaryFn summary_identity();
SummaryFn summary_censor(double t1, double t2);
SummaryFn summary_moments();  // (mean, variance)
// Robust GLM coefficients of the simulated response on the fixed design.
SummaryFn summary_robust_mest(const glm::GlmFamily& family, const glm::GlmData& design,
                              double huber_c);

SummaryFn make_summary(const std::string& key, const glm::GlmFamily& family,
                       const glm::GlmData& design, double huber_c, double censor_t1,
                       double censor_t2);

}  // namespace misbayes::registry
